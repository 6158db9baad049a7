/** Error thrown when the kernel rejects a request.
 *
 * `code` carries the kernel's own error name (e.g. "UnknownParent",
 * "GroupTooSmall", "ClosedHandle") so callers can branch on it without
 * parsing messages.
 */
export class KernelError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(`${code}: ${message}`);
    this.name = "KernelError";
    this.code = code;
  }
}

/** The kernel process died or its stream closed mid-session. */
export class BridgeTransportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BridgeTransportError";
  }
}
