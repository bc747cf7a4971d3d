// Minimal element builder; the whole console renders through this.

export type Child = Node | string | null | undefined;

export function h(
  tag: string,
  attrs: Record<string, string | boolean | ((ev: Event) => void)> = {},
  ...children: Child[]
): HTMLElement {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      el.addEventListener(key.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (value) el.setAttribute(key, "");
    } else {
      el.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    el.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return el;
}

export function clear(el: HTMLElement): HTMLElement {
  el.replaceChildren();
  return el;
}

export function field(
  label: string,
  input: HTMLElement,
): HTMLElement {
  return h("label", { class: "field" }, h("span", {}, label), input);
}

export function input(
  name: string,
  value = "",
  type = "text",
): HTMLInputElement {
  return h("input", { name, value, type }) as HTMLInputElement;
}
