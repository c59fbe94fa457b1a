// Boots the Python service on a fixture store for the integration run.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { SERVICE_URL } from "./config.js";

let proc: ChildProcess | undefined;
let stateDir: string | undefined;

async function waitForHealth(url: string, attempts = 100): Promise<void> {
  for (let i = 0; i < attempts; i++) {
    try {
      const res = await fetch(`${url}/health`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service at ${url} never became healthy`);
}

export async function setup(): Promise<void> {
  stateDir = mkdtempSync(join(tmpdir(), "newstriage-ui-"));
  const port = new URL(SERVICE_URL).port;
  proc = spawn(
    "python3",
    ["scripts/serve_fixture.py", "--port", port, "--dir", stateDir],
    { cwd: new URL("..", import.meta.url).pathname, stdio: "inherit" },
  );
  proc.on("exit", (code) => {
    if (code && code !== 0) console.error(`fixture service exited with ${code}`);
  });
  await waitForHealth(SERVICE_URL);
}

export async function teardown(): Promise<void> {
  proc?.kill("SIGTERM");
  await new Promise((resolve) => setTimeout(resolve, 300));
  proc?.kill("SIGKILL");
  if (stateDir) rmSync(stateDir, { recursive: true, force: true });
}
