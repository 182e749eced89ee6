/**
 * At most one request in flight; the newest submission replaces any queued
 * one, and a response is delivered only if nothing newer superseded it.
 */

export class SingleFlight<Req, Resp> {
  private busy = false;
  private queued: Req | null = null;

  constructor(
    private readonly send: (req: Req) => Promise<Resp>,
    private readonly deliver: (req: Req, resp: Resp) => void,
    private readonly fail: (req: Req, err: unknown) => void = () => {},
  ) {}

  get inFlight(): boolean {
    return this.busy;
  }

  submit(req: Req): void {
    if (this.busy) {
      this.queued = req; // latest wins
      return;
    }
    this.run(req);
  }

  private run(req: Req): void {
    this.busy = true;
    this.send(req).then(
      (resp) => this.settle(req, () => this.deliver(req, resp)),
      (err) => this.settle(req, () => this.fail(req, err)),
    );
  }

  private settle(req: Req, emit: () => void): void {
    this.busy = false;
    const next = this.queued;
    this.queued = null;
    if (next !== null) {
      // this response is stale: a newer state superseded it
      this.run(next);
      return;
    }
    emit();
  }
}
