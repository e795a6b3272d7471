/** Deterministic force-directed layout: same seed, same picture. */

export interface Point {
  x: number;
  y: number;
}

export function hashSeed(text: string): number {
  // FNV-1a 32-bit
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface LayoutOptions {
  width: number;
  height: number;
  seed: number;
  iterations?: number;
}

/** Fruchterman-Reingold style layout over node ids and undirected edges. */
export function forceLayout(
  ids: string[],
  edges: Array<[string, string]>,
  options: LayoutOptions,
): Map<string, Point> {
  const { width, height, seed } = options;
  const iterations = options.iterations ?? 150;
  const n = ids.length;
  const out = new Map<string, Point>();
  if (n === 0) return out;
  if (n === 1) {
    out.set(ids[0], { x: width / 2, y: height / 2 });
    return out;
  }

  const rand = mulberry32(seed);
  const index = new Map(ids.map((id, i) => [id, i]));
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    xs[i] = width * (0.1 + 0.8 * rand());
    ys[i] = height * (0.1 + 0.8 * rand());
  }
  const pairs: Array<[number, number]> = [];
  for (const [a, b] of edges) {
    const i = index.get(a);
    const j = index.get(b);
    if (i !== undefined && j !== undefined && i !== j) pairs.push([i, j]);
  }

  const area = width * height;
  const ideal = Math.sqrt(area / n);
  let temperature = Math.max(width, height) / 8;
  const cool = temperature / (iterations + 1);

  const dx = new Float64Array(n);
  const dy = new Float64Array(n);
  for (let step = 0; step < iterations; step++) {
    dx.fill(0);
    dy.fill(0);
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        let vx = xs[i] - xs[j];
        let vy = ys[i] - ys[j];
        let d2 = vx * vx + vy * vy;
        if (d2 < 1e-6) {
          vx = 0.01 * (rand() - 0.5);
          vy = 0.01 * (rand() - 0.5);
          d2 = vx * vx + vy * vy;
        }
        const d = Math.sqrt(d2);
        const force = (ideal * ideal) / d;
        dx[i] += (vx / d) * force;
        dy[i] += (vy / d) * force;
        dx[j] -= (vx / d) * force;
        dy[j] -= (vy / d) * force;
      }
    }
    for (const [i, j] of pairs) {
      const vx = xs[i] - xs[j];
      const vy = ys[i] - ys[j];
      const d = Math.sqrt(vx * vx + vy * vy) || 1e-3;
      const force = (d * d) / ideal;
      dx[i] -= (vx / d) * force;
      dy[i] -= (vy / d) * force;
      dx[j] += (vx / d) * force;
      dy[j] += (vy / d) * force;
    }
    for (let i = 0; i < n; i++) {
      const d = Math.sqrt(dx[i] * dx[i] + dy[i] * dy[i]) || 1e-9;
      const limited = Math.min(d, temperature);
      xs[i] += (dx[i] / d) * limited;
      ys[i] += (dy[i] / d) * limited;
      xs[i] = Math.min(width - 20, Math.max(20, xs[i]));
      ys[i] = Math.min(height - 20, Math.max(20, ys[i]));
    }
    temperature -= cool;
  }

  ids.forEach((id, i) => out.set(id, { x: xs[i], y: ys[i] }));
  return out;
}
