/**
 * Top-level UI wiring: one question at a time, answer buttons, undo /
 * export / import / restart controls, status banners, and the tri-state
 * diagnosis board underneath.
 */

import { ServiceClient } from "./api.js";
import { buildTaxonomy, renderBoard, type TaxonomyNode } from "./board.js";
import { Session, type SessionState } from "./session.js";

export interface AppOptions {
  /** Called with the new base URL when the user applies one. */
  onServiceChange?: (baseUrl: string) => void;
}

export interface App {
  session: Session;
  /** Resolves once the initial taxonomy fetch and first post settle. */
  ready: Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function readFileText(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result));
    reader.onerror = () =>
      reject(reader.error ?? new Error("file read failed"));
    reader.readAsText(file);
  });
}

function answerLine(answer: {
  index: number;
  subject: string;
  value: string | number;
  topic: string;
  answer: boolean;
}): string {
  const polarity = answer.answer ? "yes" : "no";
  return `#${answer.index + 1}: ${polarity} to ${answer.subject} / ${answer.value} (${answer.topic})`;
}

export function initApp(
  root: HTMLElement,
  client: ServiceClient,
  options: AppOptions = {},
): App {
  const session = new Session(client);
  let taxonomy: TaxonomyNode[] = [];

  root.textContent = "";
  root.classList.add("app");

  const header = el("header");
  header.appendChild(el("h1", undefined, "Headache diagnosis questionnaire"));
  const serviceForm = el("div", "service-url");
  const serviceInput = el("input");
  serviceInput.id = "service-input";
  serviceInput.type = "text";
  serviceInput.placeholder = "service base URL (empty = this origin)";
  serviceInput.value = client.baseUrl;
  const serviceApply = el("button", undefined, "Apply");
  serviceApply.id = "service-apply";
  serviceApply.addEventListener("click", () => {
    options.onServiceChange?.(serviceInput.value.trim());
  });
  serviceForm.appendChild(serviceInput);
  serviceForm.appendChild(serviceApply);
  header.appendChild(serviceForm);
  root.appendChild(header);

  const banner = el("section", "banner");
  banner.id = "banner";
  banner.hidden = true;
  root.appendChild(banner);

  const questionCard = el("section", "question-card");
  questionCard.id = "question-card";
  const questionText = el("p", "question-text");
  questionText.id = "question-text";
  const yesButton = el("button", undefined, "Yes");
  yesButton.id = "answer-yes";
  const noButton = el("button", undefined, "No");
  noButton.id = "answer-no";
  const buttonRow = el("div", "answer-buttons");
  buttonRow.appendChild(yesButton);
  buttonRow.appendChild(noButton);
  const progress = el("p", "progress");
  progress.id = "progress";
  questionCard.appendChild(questionText);
  questionCard.appendChild(buttonRow);
  questionCard.appendChild(progress);
  root.appendChild(questionCard);

  const controls = el("section", "controls");
  const undoButton = el("button", undefined, "Undo");
  undoButton.id = "undo";
  const exportButton = el("button", undefined, "Export transcript");
  exportButton.id = "export";
  const importInput = el("input");
  importInput.id = "import";
  importInput.type = "file";
  importInput.accept = "application/json";
  const importLabel = el("label", undefined, "Import transcript ");
  importLabel.appendChild(importInput);
  const restartButton = el("button", undefined, "Restart");
  restartButton.id = "restart";
  controls.appendChild(undoButton);
  controls.appendChild(exportButton);
  controls.appendChild(importLabel);
  controls.appendChild(restartButton);
  root.appendChild(controls);

  const notice = el("p", "notice");
  notice.id = "notice";
  notice.hidden = true;
  root.appendChild(notice);

  const board = el("section", "board");
  board.id = "board";
  root.appendChild(board);

  yesButton.addEventListener("click", () => void session.submitAnswer(true));
  noButton.addEventListener("click", () => void session.submitAnswer(false));
  undoButton.addEventListener("click", () => void session.undoLast());
  restartButton.addEventListener("click", () => void session.start());

  exportButton.addEventListener("click", () => {
    const text = session.exportTranscript();
    // jsdom has no createObjectURL; the transcript is still available
    // through Session.exportTranscript for tests.
    if (typeof URL.createObjectURL !== "function") return;
    const blob = new Blob([text], { type: "application/json" });
    const url = URL.createObjectURL(blob);
    const anchor = el("a");
    anchor.href = url;
    anchor.download = "transcript.json";
    anchor.click();
    URL.revokeObjectURL(url);
  });

  importInput.addEventListener("change", () => {
    const file = importInput.files?.[0];
    importInput.value = "";
    if (file === undefined) return;
    void readFileText(file)
      .then((text) => session.importTranscript(text))
      .catch((err: unknown) => {
        notice.textContent = err instanceof Error ? err.message : String(err);
        notice.hidden = false;
      });
  });

  function renderBanner(state: SessionState): void {
    banner.textContent = "";
    banner.className = "banner";
    banner.hidden = false;
    if (state.phase === "completed") {
      banner.classList.add("completed");
      banner.appendChild(
        el(
          "p",
          undefined,
          `Assessment complete after ${state.answers.length} answers: ` +
            "every diagnosis is either compatible or not compatible.",
        ),
      );
    } else if (state.phase === "stuck") {
      const undetermined =
        state.lastResponse?.diagnoses.filter((d) => d.state === "undetermined")
          .length ?? 0;
      banner.classList.add("stuck");
      banner.appendChild(
        el(
          "p",
          undefined,
          `No further question can settle the remaining ${undetermined} ` +
            "undetermined diagnoses.",
        ),
      );
    } else if (state.phase === "error") {
      banner.classList.add("error");
      banner.appendChild(el("p", undefined, state.error ?? "request failed"));
      if (state.conflict !== null) {
        const list = el("ul", "conflict-list");
        for (const answer of state.conflict.answers) {
          list.appendChild(el("li", undefined, answerLine(answer)));
        }
        banner.appendChild(list);
        banner.appendChild(
          el("p", undefined, "Undo removes the most recent answer."),
        );
      } else {
        const retryButton = el("button", undefined, "Retry");
        retryButton.id = "retry";
        retryButton.addEventListener("click", () => void session.retry());
        banner.appendChild(retryButton);
      }
    } else {
      banner.hidden = true;
    }
  }

  function render(state: SessionState): void {
    const question = state.lastResponse?.nextQuestion;
    const showQuestion = state.phase === "inProgress" && question !== undefined;
    questionCard.hidden = !showQuestion;
    if (showQuestion) {
      questionText.textContent = question.text;
    }
    const count = state.lastResponse?.questionCount;
    progress.textContent =
      count === undefined
        ? ""
        : `${count.answered} answered · ${count.candidatesRemaining} candidate questions remaining`;

    yesButton.disabled = state.busy || !showQuestion;
    noButton.disabled = state.busy || !showQuestion;
    undoButton.disabled = state.busy || state.answers.length === 0;
    exportButton.disabled = state.answers.length === 0;
    importInput.disabled = state.busy;
    restartButton.disabled = state.busy;

    renderBanner(state);
    renderBoard(board, taxonomy, state.lastResponse?.diagnoses ?? [], state.changed);
  }

  session.subscribe(render);
  render(session.state);

  const ready = Promise.allSettled([
    client
      .diagnoses()
      .then((entries) => {
        taxonomy = buildTaxonomy(entries);
      })
      .catch(() => {
        // Board indentation degrades gracefully; the banner already
        // reports connectivity problems from the first post.
      }),
    session.start(),
  ]).then(() => render(session.state));

  return { session, ready };
}
