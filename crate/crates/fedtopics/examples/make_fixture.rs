//! Writes the synthetic fixture under `tests/fixtures/synthetic`.
//!
//! Three vocabularies (prices, labour market, financial conditions) mix in
//! proportions that drift towards the financial block over time. Yields
//! follow a three-factor Nelson-Siegel VAR(1) with a curvature jump on
//! every statement day. One statement is dated on a Saturday and one
//! predates the panel.
//!
//! Usage: `cargo run -p fedtopics --example make_fixture [DIR]`

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use fedtopics_core::termstructure::{ns_loadings, DEFAULT_LAMBDA};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MATURITIES: [u32; 8] = [3, 6, 12, 24, 36, 60, 120, 360];
const DAYS: usize = 300;
const SPACING: usize = 8;

const BLOCKS: [&[&str]; 3] = [
    &["inflation", "prices", "energy", "commodity", "pressures", "expectations", "core", "costs", "resource", "utilization"],
    &["employment", "labor", "payrolls", "unemployment", "growth", "spending", "household", "investment", "output", "production"],
    &["financial", "markets", "credit", "liquidity", "housing", "mortgage", "strains", "lending", "banks", "securities"],
];

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn statement(rng: &mut ChaCha8Rng, progress: f64) -> String {
    // Each statement leans on one block; the financial block gains ground over time.
    let lean = [0.5 - 0.3 * progress, 0.3, 0.2 + 0.3 * progress];
    let u = rng.random::<f64>();
    let dominant = if u < lean[0] { 0 } else if u < lean[0] + lean[1] { 1 } else { 2 };
    let mut mix = [0.05; 3];
    mix[dominant] = 0.9;
    let total = 1.0;
    let mut text = String::from(
        "The Federal Open Market Committee decided today to keep its target for the federal funds rate unchanged.\n",
    );
    for sentence in 0..6 {
        let mut words = Vec::new();
        for _ in 0..10 {
            let u = rng.random::<f64>() * total;
            let block = if u < mix[0] { 0 } else if u < mix[0] + mix[1] { 1 } else { 2 };
            words.push(BLOCKS[block][rng.random_range(0..BLOCKS[block].len())]);
        }
        let mut s = words.join(" ");
        s[..1].make_ascii_uppercase();
        let _ = write!(text, "{s}{}", if sentence % 2 == 1 { ".\n" } else { ". " });
    }
    text.push_str("Voting for the FOMC monetary policy action were: Ben S. Bernanke, Chairman; Timothy F. Geithner, Vice Chairman.\n");
    text
}

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
    });
    let statements_dir = dir.join("statements");
    if statements_dir.exists() {
        fs::remove_dir_all(&statements_dir).unwrap();
    }
    fs::create_dir_all(&statements_dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20070227);

    let calendar = business_days(NaiveDate::from_ymd_opt(2006, 10, 2).unwrap(), DAYS);

    // Statement trading days; the seventh is released on the Saturday before a Monday.
    let mut releases: Vec<(NaiveDate, usize)> = Vec::new();
    let mut t = 3;
    while t < DAYS - 2 {
        releases.push((calendar[t], t));
        t += SPACING;
    }
    let (_, planned) = releases[6];
    let monday = (planned..DAYS).find(|&i| calendar[i].weekday() == Weekday::Mon).unwrap();
    releases[6] = (calendar[monday] - Duration::days(2), monday);
    let event_rows: Vec<usize> = releases.iter().map(|r| r.1).collect();

    let n_docs = releases.len() + 1;
    let early = NaiveDate::from_ymd_opt(2006, 9, 20).unwrap();
    let dates: Vec<NaiveDate> = std::iter::once(early).chain(releases.iter().map(|r| r.0)).collect();
    for (i, date) in dates.iter().enumerate() {
        let text = statement(&mut rng, i as f64 / (n_docs - 1) as f64);
        fs::write(statements_dir.join(format!("{date}.txt")), text).unwrap();
    }

    // Factors: VAR(1) around mu with a curvature jump on statement days.
    let mu = DVector::from_column_slice(&[5.0, -1.0, 0.5]);
    let a = DMatrix::from_row_slice(3, 3, &[0.98, 0.01, 0.0, 0.0, 0.95, 0.02, 0.0, 0.0, 0.9]);
    let q = DMatrix::from_row_slice(3, 3, &[0.004, 0.001, 0.0, 0.001, 0.008, 0.001, 0.0, 0.001, 0.02]);
    let chol = q.cholesky().unwrap().l();
    let taus: Vec<f64> = MATURITIES.iter().map(|&m| f64::from(m)).collect();
    let z = ns_loadings(&taus, DEFAULT_LAMBDA).unwrap().z;
    let mut f = mu.clone();
    let mut yields = String::from("date");
    for m in MATURITIES {
        let _ = write!(yields, ",{m}");
    }
    yields.push('\n');
    let mut controls = String::from("date,term_spread,credit_spread,vix\n");
    let mut credit = 1.0;
    for (t, date) in calendar.iter().enumerate() {
        let e = DVector::from_fn(3, |_, _| gauss(&mut rng));
        f = &mu + &a * (&f - &mu) + &chol * e;
        if event_rows.contains(&t) {
            f[2] += if rng.random::<bool>() { 0.3 } else { -0.3 };
        }
        let y = &z * &f;
        let row: Vec<f64> = (0..MATURITIES.len()).map(|j| y[j] + 0.05 * gauss(&mut rng)).collect();
        let _ = write!(yields, "{date}");
        for v in &row {
            let _ = write!(yields, ",{v:.4}");
        }
        yields.push('\n');

        credit += 0.02 * gauss(&mut rng);
        let stressed = *date >= NaiveDate::from_ymd_opt(2007, 2, 27).unwrap();
        let vix = 12.0 + if stressed { 8.0 } else { 0.0 } + 1.5 * gauss(&mut rng);
        match t {
            40 => continue,
            41 => {
                let _ = writeln!(controls, "{date},{:.4},{credit:.4},", row[6] - row[0]);
            }
            _ => {
                let _ = writeln!(controls, "{date},{:.4},{credit:.4},{vix:.2}", row[6] - row[0]);
            }
        }
    }
    fs::write(dir.join("yields.csv"), yields).unwrap();
    fs::write(dir.join("controls.csv"), controls).unwrap();
    println!("wrote {} statements and {DAYS} panel dates to {}", n_docs, dir.display());
}
