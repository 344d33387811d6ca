/** DOM construction for the judging screens. Pure builders: given data,
 * return detached elements; app.ts wires behavior. The DOM must never
 * contain anything derived from tier or clip identity beyond the opaque
 * audio token, which only appears inside audio element URLs. */

import { ScoreResponse, TripletView } from "./api.js";
import { INSTRUCTIONS } from "./instructions.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderInstructions(doc: Document): HTMLElement {
  const box = el(doc, "section", "instructions");
  box.appendChild(el(doc, "p", undefined, INSTRUCTIONS));
  return box;
}

export interface TripletScreen {
  root: HTMLElement;
  players: Map<string, HTMLAudioElement>;
  submitConsistent: HTMLButtonElement;
  submitInconsistent: HTMLButtonElement;
  rankSelects: Map<string, HTMLSelectElement>;
  status: HTMLElement;
}

export function renderTriplet(
  doc: Document,
  view: TripletView,
  audioUrl: (token: string) => string,
): TripletScreen {
  const root = el(doc, "main", "triplet");
  root.appendChild(
    el(doc, "h2", undefined, `Triplet ${view.judged + 1} of ${view.total}`),
  );

  const players = new Map<string, HTMLAudioElement>();
  const rankSelects = new Map<string, HTMLSelectElement>();
  const row = el(doc, "div", "players");
  for (const item of view.items) {
    const card = el(doc, "div", "player-card");
    card.appendChild(el(doc, "h3", undefined, item.position));
    const audio = el(doc, "audio");
    audio.controls = true;
    audio.preload = "auto";
    audio.src = audioUrl(item.token);
    audio.dataset.position = item.position;
    card.appendChild(audio);
    players.set(item.position, audio);

    const rank = el(doc, "select", "rank");
    rank.dataset.position = item.position;
    for (const [value, label] of [
      ["", "rank (optional)"],
      ["1", "1 strongest"],
      ["2", "2 middle"],
      ["3", "3 weakest"],
    ]) {
      const opt = el(doc, "option", undefined, label);
      opt.value = value;
      rank.appendChild(opt);
    }
    card.appendChild(rank);
    rankSelects.set(item.position, rank);
    row.appendChild(card);
  }
  root.appendChild(row);

  const submitConsistent = el(
    doc, "button", "submit", "Clear quality gradient",
  );
  const submitInconsistent = el(
    doc, "button", "submit", "No clear gradient",
  );
  submitConsistent.disabled = true;
  submitInconsistent.disabled = true;
  const actions = el(doc, "div", "actions");
  actions.appendChild(submitConsistent);
  actions.appendChild(submitInconsistent);
  root.appendChild(actions);

  const status = el(doc, "p", "status", "Listen to each clip for 3 seconds to unlock submit.");
  root.appendChild(status);
  return { root, players, submitConsistent, submitInconsistent, rankSelects, status };
}

export function renderProgress(doc: Document, score: ScoreResponse, total: number): HTMLElement {
  const bar = el(doc, "footer", "progress");
  bar.appendChild(el(doc, "span", undefined, `Judged ${score.judged} of ${total}`));
  if (score.score !== null) {
    const pct = (100 * score.score).toFixed(1);
    bar.appendChild(el(doc, "span", "score", `Consistency so far: ${pct}%`));
  }
  return bar;
}

export function renderComplete(doc: Document, score: ScoreResponse): HTMLElement {
  const root = el(doc, "main", "complete");
  root.appendChild(el(doc, "h2", undefined, "Session complete"));
  const pct = score.score === null ? "n/a" : `${(100 * score.score).toFixed(1)}%`;
  root.appendChild(el(doc, "p", undefined, `Final consistency score: ${pct}`));
  if (score.ci95) {
    const [lo, hi] = score.ci95;
    root.appendChild(
      el(doc, "p", undefined,
        `95% interval: ${(100 * lo).toFixed(1)}% to ${(100 * hi).toFixed(1)}%`),
    );
  }
  root.appendChild(el(doc, "p", undefined, `${score.judged} judgments recorded.`));
  return root;
}

export function renderRetryBanner(doc: Document, message: string): HTMLElement {
  const banner = el(doc, "div", "banner", message);
  banner.setAttribute("role", "alert");
  return banner;
}

/** Read the optional perceived order from the rank selects: positions
 * sorted by chosen rank, or undefined when incomplete. */
export function perceivedOrder(
  rankSelects: Map<string, HTMLSelectElement>,
): string[] | undefined {
  const chosen: Array<[string, number]> = [];
  for (const [position, sel] of rankSelects) {
    if (sel.value === "") return undefined;
    chosen.push([position, Number(sel.value)]);
  }
  const ranks = new Set(chosen.map(([, r]) => r));
  if (ranks.size !== chosen.length) return undefined; // duplicate ranks
  chosen.sort((a, b) => a[1] - b[1]);
  return chosen.map(([position]) => position);
}
