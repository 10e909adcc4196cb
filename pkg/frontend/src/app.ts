/** Browser wiring: one in-flight ask per session, curation panel refresh. */

import { ServiceClient, ServiceError } from "./api.js";
import {
  answerView,
  missingListTable,
  retryAffordance,
  sessionList,
  uploadNotice,
} from "./render.js";

export class ChatApp {
  private busy = false;

  constructor(
    private readonly client: ServiceClient,
    private readonly root: Document,
  ) {}

  mount(): void {
    const form = this.root.querySelector<HTMLFormElement>("#ask-form");
    form?.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = this.root.querySelector<HTMLInputElement>("#question");
      if (input && input.value.trim()) {
        void this.askFlow(input.value);
      }
    });
    const panel = this.root.querySelector("#knowledge-panel");
    panel?.addEventListener("change", (event) => {
      const target = event.target as HTMLInputElement;
      if (target.dataset.action === "upload" && target.files?.[0]) {
        void this.uploadFlow(target.dataset.canonical ?? "", target.files[0]);
      }
    });
    panel?.addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      if (target.dataset.action === "retry") {
        void this.refreshPanel();
      }
    });
    void this.refreshPanel();
  }

  async askFlow(question: string): Promise<void> {
    if (this.busy) return; // one in-flight ask per session
    this.busy = true;
    const transcript = this.root.querySelector("#transcript");
    try {
      const response = await this.client.ask(question);
      transcript?.insertAdjacentHTML("beforeend", answerView(response));
      await this.refreshSessions();
    } catch (error) {
      const message = error instanceof ServiceError ? error.message : "service unreachable";
      transcript?.insertAdjacentHTML("beforeend", retryAffordance(message));
    } finally {
      this.busy = false;
    }
  }

  async uploadFlow(canonical: string, file: File): Promise<void> {
    const panel = this.root.querySelector("#knowledge-panel");
    try {
      const bytes = await fileToBase64(file);
      const result = await this.client.upload(canonical, file.name, bytes);
      panel?.insertAdjacentHTML("afterbegin", uploadNotice(result.status, result.canonical));
    } catch (error) {
      if (error instanceof ServiceError && error.status === 404) {
        // stale entry: drop the row with a notice
        this.root.querySelector(`tr[data-canonical="${canonical}"]`)?.remove();
        panel?.insertAdjacentHTML("afterbegin", uploadNotice("entry no longer queued", canonical));
        return;
      }
      const message = error instanceof ServiceError ? error.message : "upload failed";
      panel?.insertAdjacentHTML("afterbegin", retryAffordance(message));
    }
    await this.refreshPanel();
  }

  async refreshPanel(): Promise<void> {
    const panel = this.root.querySelector("#missing-list");
    if (!panel) return;
    try {
      const listing = await this.client.missingList();
      panel.innerHTML = missingListTable(listing.entries);
    } catch {
      panel.innerHTML = retryAffordance("could not load the Missing-List");
    }
  }

  async refreshSessions(): Promise<void> {
    const target = this.root.querySelector("#session-list");
    if (!target) return;
    const listing = await this.client.sessions();
    target.innerHTML = sessionList(listing.sessions);
  }
}

function fileToBase64(file: File): Promise<string> {
  return file.arrayBuffer().then((buffer) => {
    let binary = "";
    for (const byte of new Uint8Array(buffer)) {
      binary += String.fromCharCode(byte);
    }
    return btoa(binary);
  });
}

export function boot(base = ""): void {
  const app = new ChatApp(new ServiceClient(base || window.location.origin), document);
  app.mount();
}
