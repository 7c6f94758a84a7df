/** DOM construction for the three views. No framework: each function
 * returns a detached element the app swaps into the page root. */

import type { ModelRow, QueueEntry, RunSummary } from "./model.js";
import type { Series } from "./series.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function renderRunList(
  runs: RunSummary[],
  onOpen: (runId: string) => void,
): HTMLElement {
  const root = el("div", { class: "run-list" });
  root.append(el("h1", {}, ["Labeling campaigns"]));
  if (runs.length === 0) {
    root.append(el("p", { class: "empty" }, ["No runs on this service yet."]));
    return root;
  }
  const table = el("table", {}, [
    el("thead", {}, [
      el("tr", {}, [
        el("th", {}, ["run"]),
        el("th", {}, ["status"]),
        el("th", {}, ["stage"]),
        el("th", {}, ["labels"]),
        el("th", {}, ["pending"]),
      ]),
    ]),
  ]);
  const body = el("tbody");
  for (const run of runs) {
    const link = el("a", { href: `#/runs/${run.run_id}` }, [run.run_id]);
    link.addEventListener("click", (ev) => {
      ev.preventDefault();
      onOpen(run.run_id);
    });
    body.append(
      el("tr", {}, [
        el("td", {}, [link]),
        el("td", { class: `status-${run.status}` }, [run.status]),
        el("td", {}, [run.stage]),
        el("td", {}, [String(run.n_labels)]),
        el("td", {}, [String(run.n_pending)]),
      ]),
    );
  }
  table.append(body);
  root.append(table);
  return root;
}

export interface QueueCallbacks {
  onLabel(entry: QueueEntry, label: 0 | 1): void;
}

export function renderQueue(
  entries: QueueEntry[],
  notices: Map<string, string>,
  cb: QueueCallbacks,
): HTMLElement {
  const root = el("section", { class: "queue" });
  root.append(el("h2", {}, [`Label queue (${entries.length})`]));
  for (const [recordId, note] of notices) {
    root.append(el("p", { class: "notice", "data-record": recordId }, [`${recordId}: ${note}`]));
  }
  if (entries.length === 0) {
    root.append(el("p", { class: "empty" }, ["Nothing awaiting labels."]));
    return root;
  }
  for (const entry of entries) {
    const card = el("article", { class: "query-card", "data-record": entry.record_id });
    card.append(el("h3", {}, [entry.record_id]));
    card.append(
      el("p", { class: "eps" }, [`reconstruction error ${entry.eps.toFixed(4)}`]),
    );
    const agents = Object.keys(entry.p_apt).sort();
    const scoreBits = agents.map(
      (name) => `${name} ${(entry.p_apt[name] ?? 0).toFixed(2)}`,
    );
    card.append(el("p", { class: "scores" }, [`agent p(apt): ${scoreBits.join(", ")}`]));
    const feats = el("ul", { class: "features" });
    for (const f of entry.features_on) {
      feats.append(el("li", {}, [f]));
    }
    card.append(el("p", {}, ["active attributes:"]), feats);
    const benign = el("button", { class: "benign", type: "button" }, ["benign"]);
    benign.addEventListener("click", () => cb.onLabel(entry, 0));
    const apt = el("button", { class: "apt", type: "button" }, ["APT"]);
    apt.addEventListener("click", () => cb.onLabel(entry, 1));
    card.append(el("div", { class: "actions" }, [benign, apt]));
    root.append(card);
  }
  return root;
}

const PALETTE = ["#4363d8", "#e6194b", "#3cb44b", "#f58231", "#911eb4", "#46f0f0"];

/** Polyline chart of per-iteration values. Pure SVG, one path per series;
 * an empty series list renders an empty frame rather than nothing. */
export function renderChart(title: string, series: Series[], maxIterations: number): HTMLElement {
  const width = 640;
  const height = 240;
  const padLeft = 42;
  const padBottom = 24;
  const padTop = 18;
  const plotW = width - padLeft - 8;
  const plotH = height - padTop - padBottom;
  const xMax = Math.max(maxIterations, 1);

  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "chart");
  svg.setAttribute("role", "img");

  const toX = (it: number) => padLeft + ((it - 1) / Math.max(xMax - 1, 1)) * plotW;
  const toY = (v: number) => padTop + (1 - v) * plotH;

  for (const frac of [0, 0.25, 0.5, 0.75, 1]) {
    const line = document.createElementNS(svgNs, "line");
    line.setAttribute("x1", String(padLeft));
    line.setAttribute("x2", String(width - 8));
    line.setAttribute("y1", String(toY(frac)));
    line.setAttribute("y2", String(toY(frac)));
    line.setAttribute("class", "grid");
    svg.append(line);
    const label = document.createElementNS(svgNs, "text");
    label.setAttribute("x", "4");
    label.setAttribute("y", String(toY(frac) + 4));
    label.setAttribute("class", "tick");
    label.textContent = frac.toFixed(2);
    svg.append(label);
  }

  series.forEach((s, idx) => {
    if (s.points.length === 0) return;
    const path = document.createElementNS(svgNs, "polyline");
    path.setAttribute(
      "points",
      s.points.map(([it, v]) => `${toX(it).toFixed(1)},${toY(v).toFixed(1)}`).join(" "),
    );
    path.setAttribute("fill", "none");
    path.setAttribute("stroke", PALETTE[idx % PALETTE.length] ?? "#000");
    path.setAttribute("stroke-width", "1.5");
    path.setAttribute("data-series", s.name);
    svg.append(path);
  });

  const root = el("figure", { class: "chart-box" });
  root.append(el("figcaption", {}, [title]));
  root.append(svg);
  const legend = el("ul", { class: "legend" });
  series.forEach((s, idx) => {
    const item = el("li", {}, [s.name]);
    item.style.color = PALETTE[idx % PALETTE.length] ?? "#000";
    legend.append(item);
  });
  root.append(legend);
  return root;
}

export function renderModelTable(rows: ModelRow[]): HTMLElement {
  const root = el("section", { class: "model-table" });
  root.append(el("h2", {}, ["Final comparison"]));
  if (rows.length === 0) {
    root.append(el("p", { class: "empty" }, ["Not finished yet."]));
    return root;
  }
  const table = el("table", {}, [
    el("thead", {}, [
      el("tr", {}, [el("th", {}, ["model"]), el("th", {}, ["AUC"]), el("th", {}, ["F1"])]),
    ]),
  ]);
  const body = el("tbody");
  for (const row of rows) {
    body.append(
      el("tr", {}, [
        el("td", {}, [row.model]),
        el("td", {}, [row.auc.toFixed(4)]),
        el("td", {}, [row.f1.toFixed(4)]),
      ]),
    );
  }
  table.append(body);
  root.append(table);
  return root;
}

export function renderNotFound(runId: string): HTMLElement {
  const root = el("div", { class: "not-found" });
  root.append(el("h1", {}, ["Run not found"]));
  root.append(el("p", {}, [`The service has no run "${runId}".`]));
  const back = el("a", { href: "#/" }, ["back to the run list"]);
  root.append(back);
  return root;
}

export function renderError(message: string): HTMLElement {
  return el("p", { class: "error" }, [message]);
}
