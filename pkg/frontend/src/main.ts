import { ApiClient } from "./api";
import { App } from "./views/app";

async function boot(): Promise<void> {
  let apiBase = "";
  try {
    const response = await fetch("config.json");
    if (response.ok) {
      const config = (await response.json()) as { api_base_url?: string };
      apiBase = config.api_base_url ?? "";
    }
  } catch {
    // same-origin default
  }
  const root = document.getElementById("app") as HTMLElement;
  new App(new ApiClient(apiBase), root).start();
}

void boot();
