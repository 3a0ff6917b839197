"""Passive indoor contact tracing over sniffed Wi-Fi/BLE packet metadata.

The pipeline runs capture -> MAC clustering -> feature synchronization ->
BiLSTM localization -> contact tracing, with a site-survey simulator on the
front and an encrypted query service on the back.
"""

__version__ = "0.1.0"
