import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("coalesces a burst of moves into one trailing call", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    for (let i = 0; i < 10; i++) {
      d(i);
      vi.advanceTimersByTime(10); // 10 moves inside 100 ms
    }
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(150);
    expect(calls).toEqual([9]); // only the latest value fires
  });

  it("fires a single move after the quiet period", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(42);
    vi.advanceTimersByTime(149);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([42]);
  });

  it("flush fires the pending call immediately (slider release)", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(7);
    d.flush();
    expect(calls).toEqual([7]);
    vi.advanceTimersByTime(300);
    expect(calls).toEqual([7]); // no double fire
  });

  it("flush with nothing pending is a no-op", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d.flush();
    expect(calls).toEqual([]);
  });

  it("cancel drops the pending call", () => {
    const calls: number[] = [];
    const d = debounce((v: number) => calls.push(v), 150);
    d(1);
    d.cancel();
    vi.advanceTimersByTime(500);
    expect(calls).toEqual([]);
  });
});
