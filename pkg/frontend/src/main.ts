import { ApiClient } from "./api.js";
import { App, AppElements } from "./app.js";

function requireElement<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id} in index.html`);
  return element as T;
}

const elements: AppElements = {
  queueList: requireElement("queue-list"),
  panel: requireElement("evidence-panel"),
  statusBar: requireElement("status-bar"),
  annotatorInput: requireElement<HTMLInputElement>("annotator-input"),
};

// Served by the verification service itself, so same-origin API calls.
const api = new ApiClient("");
void new App(api, elements).start();
