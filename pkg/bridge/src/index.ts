/** Node bindings for the causalchain kernel.
 *
 * All math stays in the kernel; this package only transports requests over
 * a persistent subprocess session. A Bridge owns one kernel process;
 * handles opened on it share the session, stay valid until closed, and
 * score with the reward config they were opened with.
 */

import { KernelClient, type KernelClientOptions } from "./client.js";
import { KernelError } from "./errors.js";

export { KernelClient, KernelError };
export { BridgeTransportError } from "./errors.js";

export interface RewardBreakdown {
  r_c: number;
  r_s: number;
  r_l: number;
  total: number;
  delta_uv: number;
  length: number;
}

export interface ValidityReport {
  valid: boolean;
  violations: Array<{
    step_index: number;
    missing_parents: string[];
    code: string;
  }>;
}

export class BridgeHandle {
  private bridge: Bridge;
  private id: number | null;

  constructor(bridge: Bridge, id: number) {
    this.bridge = bridge;
    this.id = id;
  }

  private liveId(): number {
    if (this.id === null) {
      throw new KernelError("ClosedHandle", "handle already closed");
    }
    return this.id;
  }

  /** Score one chain document (as a JSON string) against a gold label. */
  async score(chainJson: string, gold: string): Promise<RewardBreakdown> {
    const response = await this.bridge.client.request({
      op: "score",
      handle: this.liveId(),
      chain: chainJson,
      gold,
    });
    return response.result as RewardBreakdown;
  }

  async close(): Promise<void> {
    const id = this.liveId();
    this.id = null;
    await this.bridge.client.request({ op: "close", handle: id });
  }
}

export class Bridge {
  readonly client: KernelClient;

  constructor(options?: KernelClientOptions) {
    this.client = new KernelClient(options);
  }

  /** Open a scoring handle with a reward config (kernel field names). */
  async open(config: Record<string, unknown> = {}): Promise<BridgeHandle> {
    const response = await this.client.request({ op: "open", config });
    return new BridgeHandle(this, response.handle as number);
  }

  /** Group-normalized advantages; identical to the kernel CLI output. */
  async advantages(rewards: number[], epsilon = 1e-8): Promise<number[]> {
    const response = await this.client.request({ op: "advantages", rewards, epsilon });
    return response.result as number[];
  }

  /** Structural validity report for one chain document JSON string. */
  async validate(chainJson: string): Promise<ValidityReport> {
    const response = await this.client.request({ op: "validate", chain: chainJson });
    return response.result as ValidityReport;
  }

  /** Number of currently open handles in the kernel session. */
  async openHandleCount(): Promise<number> {
    const response = await this.client.request({ op: "handles" });
    return response.result as number;
  }

  async ping(): Promise<void> {
    await this.client.request({ op: "ping" });
  }

  async shutdown(): Promise<void> {
    await this.client.shutdown();
  }
}
