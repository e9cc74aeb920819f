/**
 * Browser entry point: wire the API client, session state, and app view to
 * the page. The service URL defaults to the page's own origin, so the
 * bundle can be served by the retrieval service itself (server.static_dir)
 * or any static host pointed at the API via ?api=<base-url>.
 */

import { ApiClient } from "./api.js";
import { SessionState } from "./state.js";
import { App } from "./ui.js";

function serviceBaseUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? window.location.origin;
}

async function boot(): Promise<void> {
  const api = new ApiClient(serviceBaseUrl());
  const state = new SessionState(api);
  const app = new App(document, state);
  const mount = document.getElementById("app");
  if (mount) {
    mount.replaceChildren(app.root);
  } else {
    document.body.appendChild(app.root);
  }
  await state.init();
  await state.refreshPreview();
}

void boot();
