import type { NavNodeView } from "./types.js";

/** One browser tab's navigation state: breadcrumb path and bookmarks.
 *
 * The breadcrumb can only grow along parent->child edges of the node views
 * the server handed out, so every prefix is a valid discovery path.
 */
export class NavigationSession {
  private crumbs: NavNodeView[] = [];
  private bookmarks = new Map<string, string>(); // table id -> name

  constructor(root: NavNodeView) {
    if (root.parents.length > 0) {
      throw new Error("session must start at the root node");
    }
    this.crumbs = [root];
  }

  get current(): NavNodeView {
    return this.crumbs[this.crumbs.length - 1];
  }

  get breadcrumb(): NavNodeView[] {
    return [...this.crumbs];
  }

  get atRoot(): boolean {
    return this.crumbs.length === 1;
  }

  /** Descend to a child of the current node; rejects non-edges. */
  push(view: NavNodeView): void {
    const ok = this.current.children.some((c) => c.id === view.id);
    if (!ok) {
      throw new Error(`${view.id} is not a child of ${this.current.id}`);
    }
    this.crumbs.push(view);
  }

  /** Backtrack one step; no-op at the root. */
  pop(): void {
    if (this.crumbs.length > 1) {
      this.crumbs.pop();
    }
  }

  /** Jump back to a node already on the breadcrumb (click on the trail). */
  truncateTo(id: string): void {
    const idx = this.crumbs.findIndex((c) => c.id === id);
    if (idx >= 0) {
      this.crumbs = this.crumbs.slice(0, idx + 1);
    }
  }

  toggleBookmark(tableId: string, tableName: string): boolean {
    if (this.bookmarks.has(tableId)) {
      this.bookmarks.delete(tableId);
      return false;
    }
    this.bookmarks.set(tableId, tableName);
    return true;
  }

  isBookmarked(tableId: string): boolean {
    return this.bookmarks.has(tableId);
  }

  get bookmarkCount(): number {
    return this.bookmarks.size;
  }

  bookmarkEntries(): [string, string][] {
    return [...this.bookmarks.entries()].sort((a, b) => a[0].localeCompare(b[0]));
  }

  /** CSV of the bookmarked tables (header always present). */
  exportBookmarksCsv(): string {
    const quote = (s: string) => (/[",\n]/.test(s) ? `"${s.replace(/"/g, '""')}"` : s);
    const lines = ["table_id,table_name"];
    for (const [id, name] of this.bookmarkEntries()) {
      lines.push(`${quote(id)},${quote(name)}`);
    }
    return lines.join("\n") + "\n";
  }
}
