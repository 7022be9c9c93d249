/**
 * Tri-state diagnosis board: three columns (compatible / not compatible /
 * undetermined) that always partition the taxonomy, with child diagnoses
 * indented under their parents.
 */

import type { BoardEntry, DiagnosisState, TaxonomyEntry } from "./protocol.js";

export interface TaxonomyNode extends TaxonomyEntry {
  depth: number;
}

/**
 * Annotate taxonomy rows with their depth.  The service lists parents
 * before children, so one forward pass suffices.
 */
export function buildTaxonomy(entries: readonly TaxonomyEntry[]): TaxonomyNode[] {
  const depths = new Map<string, number>();
  return entries.map((entry) => {
    const depth = entry.parent === null ? 0 : (depths.get(entry.parent) ?? 0) + 1;
    depths.set(entry.id, depth);
    return { ...entry, depth };
  });
}

export interface BoardPartition {
  compatible: BoardEntry[];
  notCompatible: BoardEntry[];
  undetermined: BoardEntry[];
}

/** Split board entries into the three columns, preserving their order. */
export function partitionBoard(entries: readonly BoardEntry[]): BoardPartition {
  const partition: BoardPartition = {
    compatible: [],
    notCompatible: [],
    undetermined: [],
  };
  for (const entry of entries) partition[entry.state].push(entry);
  return partition;
}

const COLUMNS: Array<{ state: DiagnosisState; title: string }> = [
  { state: "compatible", title: "Compatible" },
  { state: "notCompatible", title: "Not compatible" },
  { state: "undetermined", title: "Undetermined" },
];

/**
 * Render the three columns into `container`.  Entries keep the service's
 * taxonomy order; `changed` ids are highlighted as newly determined.
 */
export function renderBoard(
  container: HTMLElement,
  taxonomy: readonly TaxonomyNode[],
  entries: readonly BoardEntry[],
  changed: ReadonlySet<string>,
): void {
  const depths = new Map(taxonomy.map((node) => [node.id, node.depth]));
  const partition = partitionBoard(entries);
  container.textContent = "";
  for (const column of COLUMNS) {
    const group = partition[column.state];
    const section = document.createElement("section");
    section.className = `board-column board-${column.state}`;
    section.dataset.state = column.state;

    const heading = document.createElement("h3");
    heading.textContent = `${column.title} (${group.length})`;
    section.appendChild(heading);

    const list = document.createElement("ul");
    for (const entry of group) {
      const item = document.createElement("li");
      item.dataset.id = entry.id;
      item.dataset.state = entry.state;
      item.textContent = `${entry.id} ${entry.name}`;
      item.style.paddingLeft = `${(depths.get(entry.id) ?? 0) * 1.25}rem`;
      if (changed.has(entry.id)) item.classList.add("changed");
      list.appendChild(item);
    }
    section.appendChild(list);
    container.appendChild(section);
  }
}
