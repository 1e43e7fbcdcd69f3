/**
 * sparsync-render: sweep CSV -> deterministic SVG figure.
 *
 *   sparsync-render --kind rate_vs_n --in sweep.csv --out fig.svg
 *                   [--title T] [--c-alpha C] [--exponent-hat E]
 *
 * Exit codes mirror the harness: 0 success, 2 config/schema error,
 * 3 render failure.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { EmptyInput, SchemaMismatch, parseCsv } from "./csv.js";
import { FigureKind, render } from "./figures.js";

interface Args {
  kind: FigureKind;
  inputs: string[];
  out: string;
  title?: string;
  cAlpha?: number;
  exponentHat?: number;
}

const KINDS = ["rate_vs_n", "event_breakdown", "phase_transition",
  "bounds_vs_empirical"];

function parseArgs(argv: string[]): Args {
  const out: Partial<Args> = { inputs: [] };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) throw new Error(`missing value for ${a}`);
      return argv[i];
    };
    if (a === "--kind") {
      const k = next();
      if (!KINDS.includes(k)) throw new Error(`unknown kind ${k}`);
      out.kind = k as FigureKind;
    } else if (a === "--in") out.inputs!.push(next());
    else if (a === "--out") out.out = next();
    else if (a === "--title") out.title = next();
    else if (a === "--c-alpha") out.cAlpha = Number(next());
    else if (a === "--exponent-hat") out.exponentHat = Number(next());
    else throw new Error(`unknown argument ${a}`);
  }
  if (!out.kind || !out.out || out.inputs!.length === 0) {
    throw new Error("required: --kind K --in CSV [--in CSV ...] --out SVG");
  }
  return out as Args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`config error: ${(err as Error).message}`);
    return 2;
  }
  try {
    const rows = args.inputs.flatMap((p) => parseCsv(readFileSync(p, "utf-8")));
    const svg = render(args.kind, rows, {
      title: args.title,
      cAlpha: args.cAlpha,
      exponentHat: args.exponentHat,
    });
    writeFileSync(args.out, svg);
    return 0;
  } catch (err) {
    if (err instanceof SchemaMismatch || err instanceof EmptyInput ||
        (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`config error: ${(err as Error).message}`);
      return 2;
    }
    console.error(`render failure: ${(err as Error).message}`);
    return 3;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
