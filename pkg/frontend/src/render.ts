import { NavApi } from "./api.js";
import { NavigationSession } from "./session.js";
import type { NavNodeView, TableView } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document, tag: K, cls?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface NavController {
  session: NavigationSession;
  render(): Promise<void>;
  clickChild(id: string): Promise<void>;
  back(): Promise<void>;
  exportCsv(): string;
}

/** Wire the navigation UI into a container element. */
export async function mountNavigator(
  container: HTMLElement, api: NavApi,
): Promise<NavController> {
  const doc = container.ownerDocument;
  const summary = await api.summary();
  const root = await api.node(summary.root);
  const session = new NavigationSession(root);

  async function renderError(err: unknown, retry: () => Promise<void>) {
    container.querySelector(".error-banner")?.remove();
    const banner = el(doc, "div", "error-banner");
    banner.appendChild(el(doc, "span", "error-text", `Request failed: ${String(err)}`));
    const retryBtn = el(doc, "button", "retry", "Retry");
    retryBtn.addEventListener("click", () => void retry());
    banner.appendChild(retryBtn);
    container.prepend(banner);
  }

  async function clickChild(id: string): Promise<void> {
    let view: NavNodeView;
    try {
      view = await api.node(id);
    } catch (err) {
      await renderError(err, () => clickChild(id));
      return;
    }
    session.push(view);
    await render();
  }

  async function back(): Promise<void> {
    session.pop();
    await render();
  }

  async function renderLeafDetails(view: NavNodeView, host: HTMLElement) {
    if (!view.table_id) return;
    let table: TableView;
    try {
      table = await api.table(view.table_id);
    } catch (err) {
      await renderError(err, () => render());
      return;
    }
    const box = el(doc, "div", "table-details");
    box.appendChild(el(doc, "h3", "table-name", table.name));
    box.appendChild(el(doc, "p", "table-tags", `tags: ${table.tags.join(", ")}`));
    const list = el(doc, "ul", "table-attributes");
    for (const a of table.attributes) {
      list.appendChild(el(doc, "li", "table-attribute", a.name));
    }
    box.appendChild(list);
    const mark = el(doc, "button", "bookmark",
      session.isBookmarked(table.id) ? "Remove bookmark" : "Bookmark table");
    mark.dataset.tableId = table.id;
    mark.addEventListener("click", () => {
      session.toggleBookmark(table.id, table.name);
      void render();
    });
    box.appendChild(mark);
    host.appendChild(box);
  }

  async function render(): Promise<void> {
    const view = session.current;
    container.textContent = "";

    const trail = el(doc, "nav", "breadcrumb");
    session.breadcrumb.forEach((crumb, i) => {
      if (i > 0) trail.appendChild(el(doc, "span", "crumb-sep", " / "));
      const link = el(doc, "a", "crumb", crumb.label);
      link.dataset.nodeId = crumb.id;
      link.addEventListener("click", () => {
        session.truncateTo(crumb.id);
        void render();
      });
      trail.appendChild(link);
    });
    container.appendChild(trail);

    const header = el(doc, "header", "node-header");
    header.appendChild(el(doc, "h2", "node-label", view.label));
    header.appendChild(el(doc, "span", "node-kind", `${view.kind}, level ${view.level}`));
    const backBtn = el(doc, "button", "back", "Back");
    backBtn.disabled = session.atRoot;
    backBtn.addEventListener("click", () => void back());
    header.appendChild(backBtn);
    container.appendChild(header);

    const kids = el(doc, "ul", "children");
    for (const child of view.children) {
      const item = el(doc, "li", "child");
      const btn = el(doc, "button", "child-link",
        `${child.label} (${child.n_attributes})`);
      btn.dataset.nodeId = child.id;
      btn.addEventListener("click", () => void clickChild(child.id));
      item.appendChild(btn);
      kids.appendChild(item);
    }
    container.appendChild(kids);

    if (view.children.length === 0) {
      await renderLeafDetails(view, container);
    }

    const marks = el(doc, "aside", "bookmarks");
    marks.appendChild(el(doc, "h3", undefined, `Bookmarks (${session.bookmarkCount})`));
    const list = el(doc, "ul", "bookmark-list");
    for (const [id, name] of session.bookmarkEntries()) {
      const item = el(doc, "li", "bookmark-item", name);
      item.dataset.tableId = id;
      list.appendChild(item);
    }
    marks.appendChild(list);
    const exportBtn = el(doc, "button", "export", "Export CSV");
    exportBtn.addEventListener("click", () => {
      const blob = new Blob([session.exportBookmarksCsv()], { type: "text/csv" });
      const a = el(doc, "a");
      a.href = URL.createObjectURL(blob);
      a.download = "bookmarks.csv";
      a.click();
    });
    marks.appendChild(exportBtn);
    container.appendChild(marks);
  }

  await render();
  return { session, render, clickChild, back, exportCsv: () => session.exportBookmarksCsv() };
}
