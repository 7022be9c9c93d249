import { ServiceClient } from "./api.js";
import { initApp } from "./app.js";

function resolveBaseUrl(): string {
  return new URLSearchParams(window.location.search).get("service") ?? "";
}

const root = document.getElementById("app");
if (root !== null) {
  initApp(root, new ServiceClient(resolveBaseUrl()), {
    onServiceChange: (baseUrl) => {
      const url = new URL(window.location.href);
      if (baseUrl === "") url.searchParams.delete("service");
      else url.searchParams.set("service", baseUrl);
      window.location.assign(url.toString());
    },
  });
}
