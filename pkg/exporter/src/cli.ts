#!/usr/bin/env node
/**
 * dstcnet-export: turn a manifest of WAV files into DSTC feature files.
 *
 *   dstcnet-export plan --duration 25 --seg-len 10 --overlap 0.10
 *   dstcnet-export export --inputs wavs.json --out features/ \
 *       --encoder stub-768 --seg-len 10 --overlap 0.10
 *
 * Exit codes: 0 success, 1 bad input/contract, 2 I/O failure.
 */

import { planSegments } from "./segmenter.js";
import { runExport } from "./export.js";

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[], allowed: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || !allowed.includes(key.slice(2))) {
      throw new Error(`unknown flag ${key}`);
    }
    if (i + 1 >= argv.length) {
      throw new Error(`flag ${key} needs a value`);
    }
    flags[key.slice(2)] = argv[i + 1];
  }
  return flags;
}

function needNumber(flags: Flags, name: string, fallback?: number): number {
  const raw = flags[name];
  if (raw === undefined) {
    if (fallback === undefined) {
      throw new Error(`missing required flag --${name}`);
    }
    return fallback;
  }
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    throw new Error(`--${name} must be a number, got ${raw}`);
  }
  return value;
}

async function cmdPlan(argv: string[]): Promise<number> {
  const flags = parseFlags(argv, ["duration", "seg-len", "overlap"]);
  const specs = planSegments(
    needNumber(flags, "duration"),
    needNumber(flags, "seg-len", 10),
    needNumber(flags, "overlap", 0.1),
  );
  console.log("index start_s end_s pad_s");
  for (const s of specs) {
    console.log(
      `${s.index} ${s.startS.toFixed(3)} ${s.endS.toFixed(3)} ${s.padS.toFixed(3)}`,
    );
  }
  return 0;
}

async function cmdExport(argv: string[]): Promise<number> {
  const flags = parseFlags(argv, ["inputs", "out", "encoder", "seg-len", "overlap"]);
  if (!flags.inputs || !flags.out) {
    throw new Error("export needs --inputs <manifest.json> and --out <dir>");
  }
  const entries = await runExport({
    encoderName: flags.encoder ?? "stub-768",
    inputManifestPath: flags.inputs,
    segLenS: needNumber(flags, "seg-len", 10),
    overlapFrac: needNumber(flags, "overlap", 0.1),
    outDir: flags.out,
  });
  console.log(`wrote ${entries.length} recording(s) + manifest.json to ${flags.out}`);
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "plan") {
      return await cmdPlan(rest);
    }
    if (command === "export") {
      return await cmdExport(rest);
    }
    console.error("usage: dstcnet-export <plan|export> [flags]");
    return 1;
  } catch (e) {
    const err = e as NodeJS.ErrnoException;
    if (err.code && ["ENOENT", "EACCES", "EISDIR", "EIO"].includes(err.code)) {
      console.error(`i/o error: ${err.message}`);
      return 2;
    }
    console.error(`error: ${err.message}`);
    return 1;
  }
}

const isMain = process.argv[1] && import.meta.url.endsWith(
  process.argv[1].split("/").pop() ?? "",
);
if (isMain) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
