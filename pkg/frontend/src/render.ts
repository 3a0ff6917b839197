// Minimal node-tree rendering: views build plain trees that tests can
// inspect directly; the browser mounts them onto the real DOM.

export type Handler = () => void;

export interface VNode {
  tag: string;
  attrs: Record<string, string>;
  on: Record<string, Handler>;
  children: Array<VNode | string>;
}

export function h(tag: string,
                  attrs: Record<string, string> = {},
                  children: Array<VNode | string> = [],
                  on: Record<string, Handler> = {}): VNode {
  return { tag, attrs, on, children };
}

export function findAll(root: VNode, predicate: (n: VNode) => boolean): VNode[] {
  const out: VNode[] = [];
  const walk = (node: VNode) => {
    if (predicate(node)) out.push(node);
    for (const child of node.children) {
      if (typeof child !== "string") walk(child);
    }
  };
  walk(root);
  return out;
}

export function byClass(root: VNode, className: string): VNode[] {
  return findAll(root, (n) =>
    (n.attrs["class"] ?? "").split(" ").includes(className));
}

export function textOf(node: VNode | string): string {
  if (typeof node === "string") return node;
  return node.children.map(textOf).join("");
}

/** Mount a tree onto the real DOM (browser side only). */
export function mount(node: VNode | string, doc: Document): Node {
  if (typeof node === "string") return doc.createTextNode(node);
  const el = doc.createElement(node.tag);
  for (const [key, value] of Object.entries(node.attrs)) {
    el.setAttribute(key, value);
  }
  for (const [event, handler] of Object.entries(node.on)) {
    el.addEventListener(event, handler);
  }
  for (const child of node.children) {
    el.appendChild(mount(child, doc));
  }
  return el;
}
