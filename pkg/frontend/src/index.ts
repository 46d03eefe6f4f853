/**
 * Read-side analysis client for pogosim result files.
 *
 * The simulator writes Arrow IPC (Feather v2) files with one row per
 * recorded object per sampling instant and the resolved YAML configuration
 * embedded under the schema metadata key "configuration". This package
 * loads those files and computes standard swarm metrics.
 */

import { readFileSync } from "node:fs";
import { Table, tableFromIPC } from "apache-arrow";
import yaml from "js-yaml";

/** Aggregate rows for walls (65535) and membranes (65534) are not agents. */
export const NON_AGENT_ID_MIN = 65534;

export interface LoadedRun {
  /** One object per row, keyed by column name. */
  records: Record<string, unknown>[];
  /** Parsed configuration embedded by the writer ({} when absent). */
  configuration: Record<string, unknown>;
  /** The underlying Arrow table, for columnar access. */
  table: Table;
}

/**
 * Load a result file: the tabular records plus the configuration that
 * produced them. A file without embedded configuration still loads, with an
 * empty configuration and a warning.
 */
export function load_dataframe(path: string): LoadedRun {
  const table = tableFromIPC(readFileSync(path));
  let configuration: Record<string, unknown> = {};
  const text = table.schema.metadata.get("configuration");
  if (text === undefined) {
    console.warn(`${path}: no embedded configuration`);
  } else {
    configuration = (yaml.load(text) ?? {}) as Record<string, unknown>;
  }
  const records = table.toArray().map((row) => {
    const plain: Record<string, unknown> = {};
    for (const [key, value] of Object.entries(row.toJSON())) {
      // Arrow hands back bigint for 64-bit integer columns; plain numbers
      // are easier to work with and exact for all ids/tick counts here.
      plain[key] = typeof value === "bigint" ? Number(value) : value;
    }
    return plain;
  });
  return { records, configuration, table };
}

export interface AgentMsd {
  run: number | null;
  robot_id: number;
  msd: number;
}

/**
 * Mean squared displacement of each agent from its first recorded position,
 * averaged over its samples; one value per (run, robot). Results are sorted
 * by (run, robot_id) and agree with the simulator's own scoring.
 */
export function compute_msd_per_agent(
  records: Record<string, unknown>[],
): AgentMsd[] {
  const hasRun = records.length > 0 && "run" in records[0];
  const groups = new Map<string, Record<string, unknown>[]>();
  for (const row of records) {
    const id = Number(row.robot_id);
    if (id >= NON_AGENT_ID_MIN) continue;
    const run = hasRun ? Number(row.run) : -1;
    const key = `${run}:${id}`;
    const group = groups.get(key);
    if (group === undefined) groups.set(key, [row]);
    else group.push(row);
  }
  const keys = [...groups.keys()].sort((a, b) => {
    const [ra, ia] = a.split(":").map(Number);
    const [rb, ib] = b.split(":").map(Number);
    return ra - rb || ia - ib;
  });
  return keys.map((key) => {
    const samples = groups
      .get(key)!
      .slice()
      .sort((a, b) => Number(a.time) - Number(b.time));
    const x0 = Number(samples[0].x);
    const y0 = Number(samples[0].y);
    let sum = 0;
    for (const s of samples) {
      const dx = Number(s.x) - x0;
      const dy = Number(s.y) - y0;
      sum += dx * dx + dy * dy;
    }
    const [run, robot_id] = key.split(":").map(Number);
    return { run: hasRun ? run : null, robot_id, msd: sum / samples.length };
  });
}

/** Kuramoto order parameter |mean(e^{i phase})| of a set of phases. */
export function order_parameter(phases: number[]): number {
  if (phases.length === 0) return 0;
  let re = 0;
  let im = 0;
  for (const p of phases) {
    re += Math.cos(p);
    im += Math.sin(p);
  }
  return Math.hypot(re, im) / phases.length;
}
