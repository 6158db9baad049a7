import { type ChildProcessByStdio, spawn } from "node:child_process";
import { createInterface, type Interface } from "node:readline";
import type { Readable, Writable } from "node:stream";

import { BridgeTransportError, KernelError } from "./errors.js";

export interface KernelClientOptions {
  /** Command line used to launch the kernel server; defaults to
   * `python3 -m causalchain serve`, overridable with CAUSALCHAIN_KERNEL. */
  command?: string[];
}

interface Pending {
  resolve: (value: any) => void;
  reject: (error: Error) => void;
}

function kernelCommand(options?: KernelClientOptions): string[] {
  if (options?.command) return options.command;
  const fromEnv = process.env.CAUSALCHAIN_KERNEL;
  if (fromEnv) return [...fromEnv.split(" "), "serve"];
  return ["python3", "-m", "causalchain", "serve"];
}

/** One kernel subprocess speaking the line protocol.
 *
 * Requests are pipelined FIFO: the server answers strictly in order, so a
 * queue of pending promises is all the correlation needed. Calls never
 * block the event loop.
 */
export class KernelClient {
  private child: ChildProcessByStdio<Writable, Readable, null>;
  private reader: Interface;
  private pending: Pending[] = [];
  private closed = false;

  constructor(options?: KernelClientOptions) {
    const [cmd, ...args] = kernelCommand(options);
    this.child = spawn(cmd, args, { stdio: ["pipe", "pipe", "inherit"] });
    this.reader = createInterface({ input: this.child.stdout });
    this.reader.on("line", (line) => this.onLine(line));
    this.child.on("exit", () => this.failAll("kernel process exited"));
    this.child.on("error", (err) => this.failAll(`kernel spawn failed: ${err.message}`));
  }

  private onLine(line: string): void {
    const pending = this.pending.shift();
    if (!pending) return;
    let response: any;
    try {
      response = JSON.parse(line);
    } catch (err) {
      pending.reject(new BridgeTransportError(`unparseable kernel response: ${line}`));
      return;
    }
    if (response.ok) {
      pending.resolve(response);
    } else {
      pending.reject(new KernelError(String(response.error), String(response.message)));
    }
  }

  private failAll(message: string): void {
    if (this.closed) return;
    this.closed = true;
    const waiting = this.pending;
    this.pending = [];
    for (const p of waiting) p.reject(new BridgeTransportError(message));
  }

  request(payload: object): Promise<any> {
    if (this.closed) {
      return Promise.reject(new BridgeTransportError("kernel session is closed"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.child.stdin.write(JSON.stringify(payload) + "\n");
    });
  }

  async shutdown(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    this.child.stdin.end();
    await new Promise<void>((resolve) => {
      this.child.once("exit", () => resolve());
      setTimeout(() => {
        this.child.kill();
        resolve();
      }, 2000).unref();
    });
  }
}
