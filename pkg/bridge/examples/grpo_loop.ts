/** Reference integration: an external trainer using the kernel's reward
 * and advantage surface through the bridge.
 *
 * The "policy" is a softmax over a pool of candidate chain documents (a
 * stand-in for an LLM's sampler). Each iteration samples a group, scores
 * it in the kernel, converts rewards to group-relative advantages in the
 * kernel, and applies a REINFORCE update to the host-side logits. Only
 * trainer math lives here; every reward and advantage number comes from
 * the kernel.
 */

import { readFileSync } from "node:fs";

import { Bridge, type BridgeHandle } from "../src/index.js";

export interface DemoResult {
  meanRewardFirst: number;
  meanRewardLast: number;
  finalTopProbability: number;
}

function softmax(logits: number[]): number[] {
  const peak = Math.max(...logits);
  const expd = logits.map((v) => Math.exp(v - peak));
  const total = expd.reduce((a, b) => a + b, 0);
  return expd.map((v) => v / total);
}

function sampleIndex(probs: number[], rand: () => number): number {
  let cursor = rand();
  for (let i = 0; i < probs.length; i++) {
    cursor -= probs[i];
    if (cursor <= 0) return i;
  }
  return probs.length - 1;
}

/** Deterministic linear-congruential stream so runs are reproducible. */
function makeRand(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

export async function runDemo(
  corpusPath: string,
  options: { iterations?: number; groupSize?: number; lr?: number; seed?: number } = {},
): Promise<DemoResult> {
  const { iterations = 60, groupSize = 8, lr = 0.5, seed = 7 } = options;
  const lines = readFileSync(corpusPath, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .slice(0, 6);
  const golds = lines.map((line) => JSON.parse(line).gold_label as string);

  const bridge = new Bridge();
  let handle: BridgeHandle | null = null;
  try {
    handle = await bridge.open({});
    const rand = makeRand(seed);
    const logits = new Array<number>(lines.length).fill(0);
    let firstMean = 0;
    let lastMean = 0;

    for (let iter = 0; iter < iterations; iter++) {
      const probs = softmax(logits);
      const picks = Array.from({ length: groupSize }, () => sampleIndex(probs, rand));
      const rewards = await Promise.all(
        picks.map((i) => handle!.score(lines[i], golds[i]).then((b) => b.total)),
      );
      const advantages = await bridge.advantages(rewards);

      // REINFORCE on the host-side sampler: grad log p(i) = onehot - probs
      const grad = new Array<number>(lines.length).fill(0);
      picks.forEach((pick, j) => {
        for (let i = 0; i < grad.length; i++) {
          grad[i] += (advantages[j] / groupSize) * ((i === pick ? 1 : 0) - probs[i]);
        }
      });
      for (let i = 0; i < logits.length; i++) logits[i] += lr * grad[i];

      const mean = rewards.reduce((a, b) => a + b, 0) / rewards.length;
      if (iter === 0) firstMean = mean;
      lastMean = mean;
    }

    const finalProbs = softmax(logits);
    return {
      meanRewardFirst: firstMean,
      meanRewardLast: lastMean,
      finalTopProbability: Math.max(...finalProbs),
    };
  } finally {
    if (handle) await handle.close().catch(() => undefined);
    await bridge.shutdown();
  }
}
