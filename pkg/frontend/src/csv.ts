/**
 * Reader for the harness sweep CSV.
 *
 * The header is a hard contract: any mismatch with the documented column
 * list is a SchemaMismatch, never a best-effort parse. Every number used by
 * the figures is taken verbatim from these rows.
 */

export const CSV_COLUMNS = [
  "regime", "n", "alpha", "eps", "rho", "f", "trials", "root_seed",
  "m_codewords", "ln_m", "gamma", "block_len", "ladder",
  "delta", "delta1", "delta2", "d",
  "p_e_i", "p_e_i_lo", "p_e_i_hi",
  "p_e_ii", "p_e_ii_lo", "p_e_ii_hi",
  "p_e_iii", "p_e_iii_lo", "p_e_iii_hi",
  "p_e_iv", "p_e_iv_lo", "p_e_iv_hi",
  "p_e_v", "p_e_v_lo", "p_e_v_hi",
  "p_e1", "p_e1_lo", "p_e1_hi",
  "p_e2", "p_e2_lo", "p_e2_hi",
  "mean_delay", "mean_sampling_rate", "forced_random_rate",
  "e1_in_e2_violations",
  "bound_e_i", "bound_e_ii", "bound_e_iii", "bound_e_iv", "bound_e_v",
] as const;

export type Row = Record<string, string>;

export class SchemaMismatch extends Error {}
export class EmptyInput extends Error {}

export function parseCsv(text: string): Row[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaMismatch("empty file: no header");
  }
  const header = lines[0].split(",");
  if (header.length !== CSV_COLUMNS.length ||
      header.some((h, i) => h !== CSV_COLUMNS[i])) {
    throw new SchemaMismatch(
      `header does not match the documented sweep schema (got ${header.length} columns)`);
  }
  const rows: Row[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    if (parts.length !== CSV_COLUMNS.length) {
      throw new SchemaMismatch(`row has ${parts.length} fields, expected ${CSV_COLUMNS.length}`);
    }
    const row: Row = {};
    CSV_COLUMNS.forEach((c, i) => { row[c] = parts[i]; });
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new EmptyInput("CSV has a valid header but no rows");
  }
  return rows;
}

export function num(row: Row, key: string): number {
  const v = row[key];
  if (v === "inf") return Infinity;
  if (v === "-inf") return -Infinity;
  const x = Number(v);
  if (Number.isNaN(x)) {
    throw new SchemaMismatch(`field ${key} is not numeric: ${JSON.stringify(v)}`);
  }
  return x;
}
