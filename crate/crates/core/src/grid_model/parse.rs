//! Reader and canonical writer for MATPOWER-style case files.
//!
//! Supported statements (one per line, `%` starts a comment):
//!
//! ```text
//! function mpc = <name>
//! mpc.<field> = <number>;
//! mpc.<field> = [ <rows separated by ';' or newlines> ];
//! mpc.<field> = { ... };          (cell arrays are skipped)
//! mpc.<field> = '<string>';       (ignored)
//! ```
//!
//! Recognised fields are `baseMVA`, `bus`, `gen`, `branch`, `gencost`, plus the
//! extensions `branch_reliability`, `load`, `shed_cost` and `load_factor`.
//! See `docs/case-format.md` for the column layout.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Branch, Bus, CaseError, Generator, GridCase, LoadPoint, DEFAULT_SHED_COST};

/// Which outage-rate column of `branch_reliability` supplies λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateColumn {
    #[default]
    Permanent,
    Transient,
    /// Permanent plus transient.
    Total,
}

/// Which MATPOWER rating column holds the short-term emergency rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShortRatingColumn {
    RateB,
    #[default]
    RateC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseOptions {
    /// Short-term rating as a multiple of the continuous rating, when the file has none.
    pub short_rating_multiplier: f64,
    /// λ (outages/year) for branches without reliability data.
    pub default_outage_rate: f64,
    pub rate_column: RateColumn,
    pub short_rating_column: ShortRatingColumn,
    /// Shed cost applied to loads unless the file overrides it.
    pub shed_cost: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            short_rating_multiplier: 1.2,
            default_outage_rate: 1.0,
            rate_column: RateColumn::Permanent,
            short_rating_column: ShortRatingColumn::RateC,
            shed_cost: DEFAULT_SHED_COST,
        }
    }
}

#[derive(Debug)]
struct Matrix {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Default)]
struct RawCase {
    name: String,
    scalars: HashMap<String, (usize, f64)>,
    matrices: HashMap<String, Matrix>,
    last_line: usize,
}

enum State {
    Outside,
    Matrix { field: String, matrix: Matrix, row: Vec<f64> },
    Cell { start: usize },
}

fn perr(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Parse { line, message: message.into() }
}

fn parse_number(token: &str, line: usize) -> Result<f64, CaseError> {
    token
        .parse::<f64>()
        .map_err(|_| perr(line, format!("expected a number, found '{token}'")))
}

/// Consumes matrix body text. Returns the remainder after a closing `]`, if any.
fn scan_matrix<'a>(
    text: &'a str,
    line: usize,
    matrix: &mut Matrix,
    row: &mut Vec<f64>,
) -> Result<Option<&'a str>, CaseError> {
    let mut token = String::new();
    let flush = |token: &mut String, row: &mut Vec<f64>| -> Result<(), CaseError> {
        if !token.is_empty() {
            row.push(parse_number(token, line)?);
            token.clear();
        }
        Ok(())
    };
    let mut chars = text.char_indices().peekable();
    while let Some((pos, ch)) = chars.next() {
        match ch {
            ' ' | '\t' | ',' | '\r' => flush(&mut token, row)?,
            ';' => {
                flush(&mut token, row)?;
                if !row.is_empty() {
                    matrix.rows.push((line, std::mem::take(row)));
                }
            }
            ']' => {
                flush(&mut token, row)?;
                if !row.is_empty() {
                    matrix.rows.push((line, std::mem::take(row)));
                }
                return Ok(Some(&text[pos + 1..]));
            }
            '.' if text[pos..].starts_with("...") => {
                // line continuation
                flush(&mut token, row)?;
                return Ok(None);
            }
            _ => token.push(ch),
        }
    }
    flush(&mut token, row)?;
    // a newline ends a row
    if !row.is_empty() {
        matrix.rows.push((line, std::mem::take(row)));
    }
    Ok(None)
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_string = !in_string,
            '%' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

fn expect_statement_end(rest: &str, line: usize) -> Result<(), CaseError> {
    let rest = rest.trim();
    if rest.is_empty() || rest == ";" {
        Ok(())
    } else {
        Err(perr(line, format!("unexpected trailing text '{rest}'")))
    }
}

fn lex(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase::default();
    let mut state = State::Outside;
    let mut line_no = 0;
    for (idx, full_line) in text.lines().enumerate() {
        line_no = idx + 1;
        let line = strip_comment(full_line);
        state = match state {
            State::Matrix { field, mut matrix, mut row } => {
                match scan_matrix(line, line_no, &mut matrix, &mut row)? {
                    Some(rest) => {
                        expect_statement_end(rest, line_no)?;
                        raw.matrices.insert(field, matrix);
                        State::Outside
                    }
                    None => State::Matrix { field, matrix, row },
                }
            }
            State::Cell { start } => {
                if line_contains_close(line, '}') {
                    State::Outside
                } else {
                    State::Cell { start }
                }
            }
            State::Outside => {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed == "end" || trimmed == "return;" || trimmed == "return" {
                    State::Outside
                } else if let Some(rest) = trimmed.strip_prefix("function") {
                    let name = rest.split('=').nth(1).map(str::trim).unwrap_or("").trim_end_matches(';');
                    raw.name = name.to_string();
                    State::Outside
                } else if let Some(rest) = trimmed.strip_prefix("mpc.") {
                    let (field, value) = rest
                        .split_once('=')
                        .ok_or_else(|| perr(line_no, "expected '=' in assignment"))?;
                    let field = field.trim().to_string();
                    if field.is_empty() || !field.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                        return Err(perr(line_no, format!("invalid field name '{field}'")));
                    }
                    let value = value.trim();
                    if let Some(body) = value.strip_prefix('[') {
                        let mut matrix = Matrix { line: line_no, rows: Vec::new() };
                        let mut row = Vec::new();
                        match scan_matrix(body, line_no, &mut matrix, &mut row)? {
                            Some(rest) => {
                                expect_statement_end(rest, line_no)?;
                                raw.matrices.insert(field, matrix);
                                State::Outside
                            }
                            None => State::Matrix { field, matrix, row },
                        }
                    } else if let Some(body) = value.strip_prefix('{') {
                        if line_contains_close(body, '}') {
                            State::Outside
                        } else {
                            State::Cell { start: line_no }
                        }
                    } else if value.starts_with('\'') {
                        State::Outside
                    } else {
                        let number = value.trim_end_matches(';').trim();
                        raw.scalars.insert(field, (line_no, parse_number(number, line_no)?));
                        State::Outside
                    }
                } else {
                    return Err(perr(line_no, format!("unrecognised statement '{trimmed}'")));
                }
            }
        };
    }
    match state {
        State::Outside => {}
        State::Matrix { field, matrix, .. } => {
            return Err(perr(matrix.line, format!("matrix mpc.{field} is not terminated")));
        }
        State::Cell { start } => return Err(perr(start, "cell array is not terminated")),
    }
    raw.last_line = line_no;
    Ok(raw)
}

fn line_contains_close(text: &str, close: char) -> bool {
    let mut in_string = false;
    for ch in text.chars() {
        match ch {
            '\'' => in_string = !in_string,
            c if c == close && !in_string => return true,
            _ => {}
        }
    }
    false
}

fn require<'a>(raw: &'a RawCase, field: &str) -> Result<&'a Matrix, CaseError> {
    raw.matrices
        .get(field)
        .ok_or_else(|| perr(raw.last_line, format!("missing section mpc.{field}")))
}

fn check_width(matrix: &Matrix, field: &str, min: usize) -> Result<(), CaseError> {
    for (line, row) in &matrix.rows {
        if row.len() < min {
            return Err(perr(*line, format!("mpc.{field} row has {} columns, need at least {min}", row.len())));
        }
    }
    Ok(())
}

fn as_id(value: f64, line: usize, what: &str) -> Result<u32, CaseError> {
    if value.fract() != 0.0 || value < 0.0 || value > u32::MAX as f64 {
        return Err(perr(line, format!("{what} '{value}' is not a non-negative integer")));
    }
    Ok(value as u32)
}

/// Average incremental cost over `[0, p_max]` for a MATPOWER cost row.
fn marginal_cost(row: &[f64], p_max: f64, line: usize) -> Result<f64, CaseError> {
    if row.len() < 4 {
        return Err(perr(line, "gencost row needs model, startup, shutdown and n"));
    }
    let n = row[3];
    if n.fract() != 0.0 || n < 0.0 {
        return Err(perr(line, format!("gencost n '{n}' is not a count")));
    }
    let n = n as usize;
    match row[0] as i64 {
        1 => {
            if row.len() < 4 + 2 * n || n < 2 {
                return Err(perr(line, "piecewise-linear gencost needs at least two points"));
            }
            let pts = &row[4..4 + 2 * n];
            let (x0, y0) = (pts[0], pts[1]);
            let (x1, y1) = (pts[2 * n - 2], pts[2 * n - 1]);
            if x1 <= x0 {
                return Err(perr(line, "piecewise-linear gencost points must increase"));
            }
            Ok((y1 - y0) / (x1 - x0))
        }
        2 => {
            if row.len() < 4 + n {
                return Err(perr(line, format!("polynomial gencost declares {n} coefficients")));
            }
            let coeffs = &row[4..4 + n];
            // coefficients are highest order first; c_k multiplies p^k
            let power = |p: f64| coeffs.iter().fold(0.0, |acc, c| acc * p + c);
            match n {
                0 | 1 => Ok(0.0),
                2 => Ok(coeffs[0]),
                _ if p_max > 0.0 => Ok((power(p_max) - power(0.0)) / p_max),
                _ => Ok(coeffs[n - 2]),
            }
        }
        m => Err(perr(line, format!("unknown gencost model {m}"))),
    }
}

/// Parses case text with default options.
pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    parse_case_with(text, &ParseOptions::default())
}

pub fn parse_case_with(text: &str, opts: &ParseOptions) -> Result<GridCase, CaseError> {
    let raw = lex(text)?;
    let mva_base = raw
        .scalars
        .get("baseMVA")
        .map(|&(_, v)| v)
        .ok_or_else(|| perr(raw.last_line, "missing mpc.baseMVA"))?;
    let shed_cost = raw.scalars.get("shed_cost").map(|&(_, v)| v).unwrap_or(opts.shed_cost);

    let bus_m = require(&raw, "bus")?;
    check_width(bus_m, "bus", 7)?;
    let mut buses = Vec::with_capacity(bus_m.rows.len());
    let mut bus_loads = Vec::new();
    for (line, row) in &bus_m.rows {
        let id = as_id(row[0], *line, "bus id")?;
        buses.push(Bus { id, area: as_id(row[6], *line, "area")? });
        if row[2] != 0.0 {
            bus_loads.push(LoadPoint { bus: id, p_nominal: row[2], shed_cost });
        }
    }

    let loads = match raw.matrices.get("load") {
        Some(m) => {
            check_width(m, "load", 2)?;
            m.rows
                .iter()
                .map(|(line, row)| {
                    Ok(LoadPoint {
                        bus: as_id(row[0], *line, "load bus")?,
                        p_nominal: row[1],
                        shed_cost: row.get(2).copied().unwrap_or(shed_cost),
                    })
                })
                .collect::<Result<Vec<_>, CaseError>>()?
        }
        None => bus_loads,
    };

    let gen_m = require(&raw, "gen")?;
    check_width(gen_m, "gen", 9)?;
    let cost_m = require(&raw, "gencost")?;
    if cost_m.rows.len() < gen_m.rows.len() {
        return Err(perr(
            cost_m.line,
            format!("mpc.gencost has {} rows for {} generators", cost_m.rows.len(), gen_m.rows.len()),
        ));
    }
    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for ((line, row), (cost_line, cost_row)) in gen_m.rows.iter().zip(&cost_m.rows) {
        if row[7] <= 0.0 {
            continue;
        }
        let p_max = row[8];
        generators.push(Generator {
            bus: as_id(row[0], *line, "generator bus")?,
            p_max,
            marginal_cost: marginal_cost(cost_row, p_max, *cost_line)?,
            p_scheduled: row[1],
        });
    }

    let br_m = require(&raw, "branch")?;
    check_width(br_m, "branch", 11)?;
    let mut rates: Vec<Option<f64>> = vec![None; br_m.rows.len()];
    if let Some(rel) = raw.matrices.get("branch_reliability") {
        check_width(rel, "branch_reliability", 2)?;
        for (line, row) in &rel.rows {
            let idx = as_id(row[0], *line, "branch index")? as usize;
            if idx == 0 || idx > rates.len() {
                return Err(perr(*line, format!("branch index {idx} out of range 1..={}", rates.len())));
            }
            let transient = || {
                row.get(2)
                    .copied()
                    .ok_or_else(|| perr(*line, "transient outage-rate column missing"))
            };
            let lambda = match opts.rate_column {
                RateColumn::Permanent => row[1],
                RateColumn::Transient => transient()?,
                RateColumn::Total => row[1] + transient()?,
            };
            rates[idx - 1] = Some(lambda);
        }
    }
    let mut branches = Vec::with_capacity(br_m.rows.len());
    for ((line, row), rate) in br_m.rows.iter().zip(rates) {
        let rating_long = row[5];
        let short_col = match opts.short_rating_column {
            ShortRatingColumn::RateB => row[6],
            ShortRatingColumn::RateC => row[7],
        };
        let rating_short = if short_col > 0.0 {
            short_col
        } else {
            opts.short_rating_multiplier * rating_long
        };
        branches.push(Branch {
            from_bus: as_id(row[0], *line, "from bus")?,
            to_bus: as_id(row[1], *line, "to bus")?,
            reactance: row[3],
            rating_long,
            rating_short,
            outage_rate: rate.unwrap_or(opts.default_outage_rate),
            in_service: row[10] > 0.0,
        });
    }

    let mut case = GridCase {
        name: raw.name.clone(),
        buses,
        branches,
        generators,
        loads,
        mva_base,
        load_factor: raw.scalars.get("load_factor").map(|&(_, v)| v).unwrap_or(1.0),
        bus_index: HashMap::new(),
    };
    case.validate()?;
    Ok(case)
}

/// Canonical text form. `parse_case(serialize_case(c))` reproduces `c` exactly.
pub fn serialize_case(case: &GridCase) -> String {
    let mut out = String::new();
    let name = if case.name.is_empty() { "grid_case" } else { &case.name };
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", case.mva_base);
    let _ = writeln!(out, "mpc.load_factor = {};", case.load_factor);

    let mut bus_pd: HashMap<u32, f64> = HashMap::new();
    for l in &case.loads {
        *bus_pd.entry(l.bus).or_default() += l.p_nominal;
    }
    let _ = writeln!(out, "\n%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    out.push_str("mpc.bus = [\n");
    for b in &case.buses {
        let pd = bus_pd.get(&b.id).copied().unwrap_or(0.0);
        let _ = writeln!(out, "\t{}\t1\t{}\t0\t0\t0\t{}\t1\t0\t0\t{}\t1.1\t0.9;", b.id, pd, b.area, b.area);
    }
    out.push_str("];\n");

    let _ = writeln!(out, "\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    out.push_str("mpc.gen = [\n");
    for g in &case.generators {
        let _ = writeln!(out, "\t{}\t{}\t0\t0\t0\t1\t{}\t1\t{}\t0;", g.bus, g.p_scheduled, case.mva_base, g.p_max);
    }
    out.push_str("];\n");

    let _ = writeln!(out, "\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax");
    out.push_str("mpc.branch = [\n");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t0\t{}\t0\t{}\t{}\t{}\t0\t0\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.reactance,
            br.rating_long,
            br.rating_short,
            br.rating_short,
            u8::from(br.in_service)
        );
    }
    out.push_str("];\n");

    let _ = writeln!(out, "\n%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc1\tc0");
    out.push_str("mpc.gencost = [\n");
    for g in &case.generators {
        let _ = writeln!(out, "\t2\t0\t0\t2\t{}\t0;", g.marginal_cost);
    }
    out.push_str("];\n");

    let _ = writeln!(out, "\n%% loads\n%\tbus\tPd\tshed_cost");
    out.push_str("mpc.load = [\n");
    for l in &case.loads {
        let _ = writeln!(out, "\t{}\t{}\t{};", l.bus, l.p_nominal, l.shed_cost);
    }
    out.push_str("];\n");

    let _ = writeln!(out, "\n%% branch reliability\n%\tbranch\tlambda_perm\tlambda_trans");
    out.push_str("mpc.branch_reliability = [\n");
    for (k, br) in case.branches.iter().enumerate() {
        let _ = writeln!(out, "\t{}\t{}\t{};", k + 1, br.outage_rate, br.outage_rate);
    }
    out.push_str("];\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 100 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 100 0 0 0 1 100 1 200 0 ];
mpc.branch = [
  1 2 0.01 0.1 0 150 0 0 0 0 1 -360 360;
];
mpc.gencost = [ 2 0 0 2 10 0 ];
";

    #[test]
    fn parses_minimal_case_with_defaults() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.name, "two_bus");
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.loads, vec![LoadPoint { bus: 2, p_nominal: 100.0, shed_cost: DEFAULT_SHED_COST }]);
        let br = &case.branches[0];
        assert_eq!(br.rating_short, 180.0);
        assert_eq!(br.outage_rate, 1.0);
        assert_eq!(case.generators[0].marginal_cost, 10.0);
    }

    #[test]
    fn configurable_fallbacks() {
        let opts = ParseOptions { short_rating_multiplier: 1.5, default_outage_rate: 0.3, ..Default::default() };
        let case = parse_case_with(TWO_BUS, &opts).unwrap();
        assert_eq!(case.branches[0].rating_short, 225.0);
        assert_eq!(case.branches[0].outage_rate, 0.3);
    }

    #[test]
    fn reliability_columns() {
        let text = format!("{TWO_BUS}mpc.branch_reliability = [1 0.24 2.9];\n");
        let perm = parse_case(&text).unwrap();
        assert_eq!(perm.branches[0].outage_rate, 0.24);
        let trans = parse_case_with(&text, &ParseOptions { rate_column: RateColumn::Transient, ..Default::default() })
            .unwrap();
        assert_eq!(trans.branches[0].outage_rate, 2.9);
        let total =
            parse_case_with(&text, &ParseOptions { rate_column: RateColumn::Total, ..Default::default() }).unwrap();
        assert!((total.branches[0].outage_rate - 3.14).abs() < 1e-12);
    }

    #[test]
    fn quadratic_cost_uses_secant_slope() {
        let row = [2.0, 0.0, 0.0, 3.0, 0.01, 20.0, 100.0];
        assert!((marginal_cost(&row, 100.0, 1).unwrap() - 21.0).abs() < 1e-12);
        let pwl = [1.0, 0.0, 0.0, 3.0, 0.0, 0.0, 50.0, 500.0, 100.0, 1500.0];
        assert!((marginal_cost(&pwl, 100.0, 1).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_text_reports_line() {
        let bad = TWO_BUS.replace("2 1 100 0", "2 1 1x0 0");
        assert!(matches!(parse_case(&bad), Err(CaseError::Parse { line: 5, .. })));

        let unterminated = TWO_BUS.replace("];\nmpc.gen", "\nmpc.gen");
        assert!(matches!(parse_case(&unterminated), Err(CaseError::Parse { .. })));

        let garbage = format!("{TWO_BUS}this is not matpower\n");
        assert!(matches!(parse_case(&garbage), Err(CaseError::Parse { line: 12, .. })));

        let short_row = TWO_BUS.replace("1 2 0.01 0.1 0 150 0 0 0 0 1 -360 360;", "1 2 0.01 0.1;");
        assert!(matches!(parse_case(&short_row), Err(CaseError::Parse { line: 9, .. })));
    }

    #[test]
    fn validation_names_element() {
        let bad = TWO_BUS.replace("1 2 0.01 0.1 0 150", "1 9 0.01 0.1 0 150");
        let err = parse_case(&bad).unwrap_err();
        assert_eq!(err.to_string(), "invalid branch 1 (1-9): references missing bus 9");
        let bad = TWO_BUS.replace("0.01 0.1 0 150", "0.01 -0.1 0 150");
        assert!(err_mentions(parse_case(&bad), "reactance"));
        let bad = TWO_BUS.replace("0.01 0.1 0 150", "0.01 0.1 0 0");
        assert!(err_mentions(parse_case(&bad), "rating"));
    }

    fn err_mentions(r: Result<GridCase, CaseError>, word: &str) -> bool {
        matches!(r, Err(CaseError::Validation { message, .. }) if message.contains(word))
    }

    #[test]
    fn skips_cells_strings_and_comments() {
        let text = format!(
            "% header\n{TWO_BUS}mpc.bus_name = {{\n\t'A; ]';\n\t'B';\n}};\nmpc.version = '2'; % trailing\n"
        );
        assert!(parse_case(&text).is_ok());
    }

    #[test]
    fn two_bus_round_trip() {
        let case = parse_case(TWO_BUS).unwrap();
        let again = parse_case(&serialize_case(&case)).unwrap();
        assert_eq!(case, again);
    }
}
