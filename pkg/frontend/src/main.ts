import { ServiceClient } from "./api.js";
import { OfflineQueue } from "./queue.js";
import { AnnotatorSession } from "./session.js";
import { DomView, bindKeyboard } from "./ui.js";

const RETRY_INTERVAL_MS = 5000;

function annotatorId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("annotator");
  if (fromQuery) {
    window.localStorage.setItem("pixsift.annotator", fromQuery);
    return fromQuery;
  }
  const stored = window.localStorage.getItem("pixsift.annotator");
  if (stored) {
    return stored;
  }
  const entered = window.prompt("Annotator id:") || `anon-${Date.now()}`;
  window.localStorage.setItem("pixsift.annotator", entered);
  return entered;
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const client = new ServiceClient((input, init) => window.fetch(input, init));
  const view = new DomView(root);
  const session = new AnnotatorSession(
    client,
    view,
    annotatorId(),
    new OfflineQueue(window.localStorage),
  );
  view.onChoice = (choice) => void session.choose(choice);
  view.onRetry = () => void session.reconnect();
  bindKeyboard(document, (choice) => void session.choose(choice));
  window.addEventListener("online", () => void session.reconnect());
  window.setInterval(() => {
    if (session.queue.size > 0) {
      void session.reconnect();
    }
  }, RETRY_INTERVAL_MS);
  void session.start();
}

boot();
