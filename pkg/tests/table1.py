"""Seven-device clustering fixture.

Each profile is a phone model with the randomized MACs it was observed
under, plus synthetic constant model fields (chosen distinct per model and
collision-free under the fingerprint hash, which the acceptance test
verifies by requiring exact bucket recovery).
"""

PROFILES = [
    ("Galaxy S4",
     ((0, bytes.fromhex("47616c61787953344c4f53")),
      (221, bytes.fromhex("0050f2040001")),
      (45, bytes.fromhex("ef0117ff"))),
     ["D0:22:BE:F5:7C:B4"]),

    ("HTC One X",
     ((0, bytes.fromhex("4854434f6e6558")),
      (221, bytes.fromhex("0050f2040002")),
      (45, bytes.fromhex("ad0163ff"))),
     ["E8:99:C4:99:57:24"]),

    ("Galaxy S6",
     ((0, bytes.fromhex("47616c6178795336")),
      (221, bytes.fromhex("0050f2040003")),
      (45, bytes.fromhex("ef1117ff")),
      (127, bytes.fromhex("04000a02"))),
     ["4E:0F:A0:57:F8:75", "26:45:19:1E:D5:FE", "1A:5B:0A:B1:7D:4A",
      "0E:BF:6D:4D:ED:A7", "42:B2:3B:14:49:F9", "1A:CF:16:13:A2:CB",
      "8C:F5:A3:3D:16:DA", "3A:DC:D3:0A:46:B6"]),

    ("Galaxy A11",
     ((0, bytes.fromhex("47616c617879413131")),
      (221, bytes.fromhex("0050f2040004")),
      (45, bytes.fromhex("2d1a7e10")),
      (127, bytes.fromhex("04000a0220"))),
     ["6A:E0:23:0C:20:0F", "56:5C:AC:D6:13:30", "E2:01:19:D0:64:2D",
      "FA:05:BB:EA:47:2D", "A0:27:B6:EE:6A:A7", "7E:69:90:C6:C4:04",
      "DA:00:FD:35:82:25", "56:2F:2B:64:BC:C5", "F6:08:C4:AF:61:94",
      "16:0D:FA:80:F8:1F", "5E:99:98:7B:5A:BF", "96:96:27:97:22:4C",
      "FE:CB:1A:2E:F5:9A", "B2:78:9D:5C:B9:1A", "16:3C:FC:DF:1C:CA",
      "96:38:7C:5D:20:5C"]),

    ("iPhone SE",
     ((0, bytes.fromhex("6950686f6e655345")),
      (221, bytes.fromhex("0017f20a0001")),
      (45, bytes.fromhex("2d1aee11"))),
     ["82:31:01:8A:F3:AD", "AE:9E:BE:7A:F3:D3", "A6:E9:93:A7:9D:3E",
      "D2:C5:A7:8B:9E:2C", "46:33:10:CE:43:3B", "AA:CB:57:97:5E:5F",
      "1A:40:6D:01:B4:05", "96:C2:5B:09:D8:4E", "3A:E6:E3:9B:8E:6D",
      "56:D3:41:61:0B:0A", "A2:68:13:44:B2:EF", "8E:6A:CF:EF:6E:1F",
      "56:A2:4A:EE:D4:46", "E2:F7:83:DC:1E:E4", "22:29:5A:0D:F3:24",
      "B6:33:3F:4F:89:1A", "9E:3D:78:F4:38:5D"]),

    ("iPhone X",
     ((0, bytes.fromhex("6950686f6e6558")),
      (221, bytes.fromhex("0017f20a0002")),
      (45, bytes.fromhex("2d1aee19"))),
     ["86:98:6E:73:89:1D", "86:AD:C7:47:02:39", "3E:6F:2D:B3:4D:BB",
      "76:8A:CB:74:73:90", "9A:2D:E5:A8:F1:5A", "76:34:D2:C0:89:71",
      "FE:B8:15:02:43:7C", "76:55:81:98:C3:78", "CE:56:BC:E7:3E:72",
      "46:C9:78:16:41:B6", "BE:F2:DB:37:1A:8A", "2A:2F:3E:B1:C7:A0",
      "6E:4C:1E:F1:8E:E8", "A2:97:F2:BA:2A:D5", "6A:DD:55:59:2E:68",
      "DA:D2:D1:55:18:60", "F2:C5:62:AD:29:04"]),

    ("PinePhone",
     ((0, bytes.fromhex("50696e6550686f6e65")),
      (221, bytes.fromhex("00163208000a")),
      (45, bytes.fromhex("7201ffcc"))),
     ["7A:26:59:B4:C6:6D", "D6:8A:05:6A:62:F5", "96:61:D9:88:25:45",
      "7E:53:9C:5F:BE:D0", "B6:13:70:3F:28:C9", "0A:70:BB:F2:2D:9D",
      "52:A2:3B:BD:6D:DF", "D6:DB:E0:37:8C:CE", "62:0B:F8:3C:3A:E2",
      "BA:12:FB:78:53:F4", "A2:3E:F7:DF:14:03", "BE:B6:47:61:BC:31",
      "EA:14:84:75:F9:00", "8E:B7:F1:4D:1A:FC", "C6:41:5C:E2:C6:7B",
      "92:47:59:89:C4:37", "CA:DC:C0:CF:39:FB"]),
]
