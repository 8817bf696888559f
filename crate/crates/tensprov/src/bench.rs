//! Synthetic join-scaling benchmark: generate two key-joinable tables sized
//! by a scale factor, run the join with capture, and measure capture time,
//! tensor memory, and forward-query latency.
//!
//! The generator emits a trade-style fact table joined on a customer key to
//! a wide customer-profile dimension table. Row counts scale exactly
//! linearly with the scale factor; key matching follows the configured
//! match rate against unique dimension keys, so the join output stays close
//! to `match_rate * left_rows` rows.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::dataset::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::graph::Pipeline;
use crate::ops::{self, JoinKind};
use crate::query::{QueryEngine, RecordRef};
use crate::tensor::MEM_ACCOUNTING;
use crate::value::{CellType, CellValue};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scale_factor: u32,
    pub rows_per_sf_left: u32,
    pub rows_per_sf_right: u32,
    /// Fraction of left rows whose key matches some right key.
    pub match_rate: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            scale_factor: 1,
            rows_per_sf_left: 18_000,
            rows_per_sf_right: 19_500,
            match_rate: 0.9,
            seed: 42,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale_factor == 0 {
            return Err(Error::InvalidParams("scale factor must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.match_rate) {
            return Err(Error::InvalidParams(format!(
                "match rate must be within [0, 1], got {}",
                self.match_rate
            )));
        }
        Ok(())
    }
}

/// One scale factor's measurements. The CSV column contract is
/// sf,left_rows,right_rows,out_rows,capture_ms,tensor_bytes,q1_avg_ms.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub sf: u32,
    pub left_rows: usize,
    pub right_rows: usize,
    pub out_rows: usize,
    pub capture_ms: f64,
    pub tensor_bytes: u64,
    pub q1_avg_ms: f64,
    pub input_csv_bytes: u64,
    pub accounting: String,
}

pub const BENCH_CSV_HEADER: &str = "sf,left_rows,right_rows,out_rows,capture_ms,tensor_bytes,q1_avg_ms";

impl BenchReport {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{},{:.6}",
            self.sf, self.left_rows, self.right_rows, self.out_rows, self.capture_ms,
            self.tensor_bytes, self.q1_avg_ms
        )
    }
}

const SYMBOLS: &[&str] = &["AAPL", "MSFT", "GOOG", "AMZN", "NVDA", "TSLA", "ORCL", "IBM", "META", "AMD", "INTC", "CSCO"];
const EXCHANGES: &[&str] = &["NYSE", "NASDAQ", "LSE", "TSE", "HKEX", "FRA"];
const TRADE_TYPES: &[&str] = &["TMB", "TMS", "TLB", "TLS", "TSL"];
const FIRST_NAMES: &[&str] = &["Alice", "Bob", "Carla", "Diego", "Elena", "Farid", "Grace", "Hugo", "Ines", "Jonas", "Karim", "Lena", "Mateo", "Nora", "Omar", "Priya", "Quentin", "Rosa", "Sven", "Tara"];
const LAST_NAMES: &[&str] = &["Anderson", "Brown", "Chen", "Dubois", "Evans", "Fischer", "Garcia", "Hansen", "Ivanov", "Johnson", "Kim", "Larsen", "Moreau", "Nguyen", "Olsen", "Perez", "Quinn", "Rossi", "Schmidt", "Tanaka"];
const STREETS: &[&str] = &["Maple Avenue", "Oak Street", "Cedar Lane", "Elm Drive", "Birch Road", "Willow Way", "Chestnut Court", "Pine Crescent"];
const CITIES: &[&str] = &["Springfield", "Riverton", "Lakeside", "Hillview", "Fairmont", "Brookfield", "Ashford", "Milltown", "Eastvale", "Northgate"];
const STATES: &[&str] = &["California", "Texas", "New York", "Ontario", "Bavaria", "Catalonia", "Normandy", "Kyoto", "Queensland", "Punjab"];
const COUNTRIES: &[&str] = &["United States", "Canada", "Germany", "Spain", "France", "Japan", "Australia", "India", "Brazil", "Norway"];
const BROKERS: &[&str] = &["Meridian Cap", "Atlas Broking", "Crestline Sec", "Harbor Trade", "Summit Desk", "Pinnacle Mkt"];
const WORDS: &[&str] = &[
    "portfolio", "rebalance", "quarterly", "dividend", "allocation", "hedging", "exposure",
    "liquidity", "settlement", "clearing", "margin", "collateral", "derivative", "futures",
    "options", "equity", "income", "growth", "municipal", "treasury", "retail", "premium",
    "segment", "campaign", "outreach", "renewal", "onboarding", "advisory", "brokerage",
    "statement", "transfer", "custody", "compliance", "disclosure", "prospect", "referral",
];

fn pick<'a>(rng: &mut StdRng, list: &[&'a str]) -> &'a str {
    list[rng.gen_range(0..list.len())]
}

fn phrase(rng: &mut StdRng, words: usize) -> String {
    let mut parts = Vec::with_capacity(words);
    for _ in 0..words {
        parts.push(pick(rng, WORDS));
    }
    parts.join(" ")
}

fn date(rng: &mut StdRng) -> String {
    format!(
        "{:04}-{:02}-{:02}",
        rng.gen_range(1950..2005),
        rng.gen_range(1..13),
        rng.gen_range(1..29)
    )
}

fn timestamp(rng: &mut StdRng) -> String {
    format!(
        "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
        rng.gen_range(2015..2024),
        rng.gen_range(1..13),
        rng.gen_range(1..29),
        rng.gen_range(0..24),
        rng.gen_range(0..60),
        rng.gen_range(0..60)
    )
}

fn text(s: impl Into<String>) -> CellValue {
    CellValue::Text(s.into())
}

/// The trade-style left table: one row per trade, `t_ca_key` is the join key.
pub fn generate_left(cfg: &BenchConfig) -> Dataset {
    let rows_n = (cfg.scale_factor * cfg.rows_per_sf_left) as usize;
    let right_n = (cfg.scale_factor * cfg.rows_per_sf_right) as i64;
    let mut rng = StdRng::seed_from_u64(cfg.seed ^ 0x1eaf);
    let schema = Schema::from_pairs(&[
        ("t_id", CellType::Integer),
        ("t_dts", CellType::Text),
        ("t_ca_key", CellType::Integer),
        ("t_symbol", CellType::Text),
        ("t_exchange", CellType::Text),
        ("t_trade_type", CellType::Text),
        ("t_is_cash", CellType::Boolean),
        ("t_qty", CellType::Integer),
        ("t_bid_price", CellType::Real),
        ("t_trade_price", CellType::Real),
        ("t_exec_name", CellType::Text),
        ("t_broker", CellType::Text),
        ("t_commission", CellType::Real),
        ("t_fee", CellType::Real),
        ("t_tax", CellType::Real),
        ("t_memo", CellType::Text),
    ])
    .expect("bench schema");

    let mut rows = Vec::with_capacity(rows_n);
    for i in 0..rows_n {
        let key = if rng.gen_bool(cfg.match_rate) {
            rng.gen_range(1..=right_n)
        } else {
            right_n + 1 + rng.gen_range(0..right_n.max(1))
        };
        let bid: f64 = rng.gen_range(5.0..500.0);
        rows.push(vec![
            CellValue::Int(i as i64 + 1),
            text(timestamp(&mut rng)),
            CellValue::Int(key),
            text(pick(&mut rng, SYMBOLS)),
            text(pick(&mut rng, EXCHANGES)),
            text(pick(&mut rng, TRADE_TYPES)),
            CellValue::Bool(rng.gen_bool(0.5)),
            CellValue::Int(rng.gen_range(1..10_000)),
            CellValue::Real((bid * 100.0).round() / 100.0),
            CellValue::Real(((bid + rng.gen_range(-1.0..1.0)) * 100.0).round() / 100.0),
            text(format!("{} {}", pick(&mut rng, FIRST_NAMES), pick(&mut rng, LAST_NAMES))),
            text(pick(&mut rng, BROKERS)),
            CellValue::Real((rng.gen_range(0.0..50.0f64) * 100.0).round() / 100.0),
            CellValue::Real((rng.gen_range(0.0..10.0f64) * 100.0).round() / 100.0),
            CellValue::Real((rng.gen_range(0.0..30.0f64) * 100.0).round() / 100.0),
            text(phrase(&mut rng, 20)),
        ]);
    }
    Dataset::new("trades", schema, rows).expect("bench left table")
}

/// The customer-profile right table with unique keys 1..=rows.
pub fn generate_right(cfg: &BenchConfig) -> Dataset {
    let rows_n = (cfg.scale_factor * cfg.rows_per_sf_right) as usize;
    let mut rng = StdRng::seed_from_u64(cfg.seed ^ 0xcafe);
    let schema = Schema::from_pairs(&[
        ("c_key", CellType::Integer),
        ("c_tax_id", CellType::Text),
        ("c_last", CellType::Text),
        ("c_first", CellType::Text),
        ("c_middle", CellType::Text),
        ("c_gender", CellType::Text),
        ("c_tier", CellType::Integer),
        ("c_dob", CellType::Text),
        ("c_addr_line1", CellType::Text),
        ("c_addr_line2", CellType::Text),
        ("c_postal", CellType::Text),
        ("c_city", CellType::Text),
        ("c_state", CellType::Text),
        ("c_country", CellType::Text),
        ("c_phone", CellType::Text),
        ("c_email", CellType::Text),
        ("c_national_id", CellType::Text),
        ("c_agency_id", CellType::Text),
        ("c_credit_rating", CellType::Integer),
        ("c_net_worth", CellType::Real),
        ("c_num_cards", CellType::Integer),
        ("c_marketing", CellType::Text),
    ])
    .expect("bench schema");

    let mut rows = Vec::with_capacity(rows_n);
    for i in 0..rows_n {
        let last = pick(&mut rng, LAST_NAMES);
        let first = pick(&mut rng, FIRST_NAMES);
        rows.push(vec![
            CellValue::Int(i as i64 + 1),
            text(format!("{:03}-{:02}-{:07}", rng.gen_range(100..1000), rng.gen_range(10..100), rng.gen_range(0..10_000_000))),
            text(last),
            text(first),
            text(format!("{}", (b'A' + rng.gen_range(0..26u8)) as char)),
            text(if rng.gen_bool(0.5) { "F" } else { "M" }),
            CellValue::Int(rng.gen_range(1..4)),
            text(date(&mut rng)),
            text(format!("{} {}", rng.gen_range(1..9999), pick(&mut rng, STREETS))),
            text(format!("Apt {}", rng.gen_range(1..400))),
            text(format!("{:06}", rng.gen_range(0..1_000_000))),
            text(pick(&mut rng, CITIES)),
            text(pick(&mut rng, STATES)),
            text(pick(&mut rng, COUNTRIES)),
            text(format!("+{} ({:03}) {:03}-{:04}", rng.gen_range(1..99), rng.gen_range(100..1000), rng.gen_range(100..1000), rng.gen_range(0..10_000))),
            text(format!("{}.{}@example.com", first.to_lowercase(), last.to_lowercase())),
            text(format!("{:012}", rng.gen_range(0i64..1_000_000_000_000))),
            text(format!("AGY{:013}", rng.gen_range(0i64..10_000_000_000_000))),
            CellValue::Int(rng.gen_range(300..850)),
            CellValue::Real((rng.gen_range(-5e4..5e6f64) * 100.0).round() / 100.0),
            CellValue::Int(rng.gen_range(0..12)),
            text(phrase(&mut rng, 28)),
        ]);
    }
    Dataset::new("customers", schema, rows).expect("bench right table")
}

/// Run the join benchmark at one scale factor.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let left = generate_left(cfg);
    let right = generate_right(cfg);
    let left_rows = left.row_count();
    let right_rows = right.row_count();
    let input_csv_bytes = left.csv_byte_size() + right.csv_byte_size();

    let key_l = left.schema().position("t_ca_key").expect("key column");
    let key_r = right.schema().position("c_key").expect("key column");

    let started = Instant::now();
    let capture = ops::join(&left, &right, "joined", "bench-join", &[(key_l, key_r)], JoinKind::Inner)?;
    let capture_ms = started.elapsed().as_secs_f64() * 1000.0;

    let out_rows = capture.output.row_count();
    let tensor_bytes: u64 = capture.tensors.iter().map(|t| t.memory_bytes()).sum();

    let mut pipeline = Pipeline::new("bench", false);
    pipeline.register_source(left)?;
    pipeline.register_source(right)?;
    pipeline.register(capture)?;

    // Mean forward-query latency over 50 random left rows.
    let engine = QueryEngine::new(&pipeline);
    let mut rng = StdRng::seed_from_u64(cfg.seed ^ 0x51);
    let mut total_ms = 0.0;
    let samples = 50;
    for _ in 0..samples {
        let row = rng.gen_range(0..left_rows) as u32;
        let started = Instant::now();
        let hits = engine.forward_records(&RecordRef::new("trades", row), "joined")?;
        total_ms += started.elapsed().as_secs_f64() * 1000.0;
        std::hint::black_box(hits);
    }

    Ok(BenchReport {
        sf: cfg.scale_factor,
        left_rows,
        right_rows,
        out_rows,
        capture_ms,
        tensor_bytes,
        q1_avg_ms: total_ms / samples as f64,
        input_csv_bytes,
        accounting: MEM_ACCOUNTING.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            scale_factor: 1,
            rows_per_sf_left: 500,
            rows_per_sf_right: 540,
            match_rate: 0.9,
            seed: 7,
        }
    }

    #[test]
    fn row_counts_scale_exactly_with_sf() {
        let mut cfg = small();
        let l1 = generate_left(&cfg);
        cfg.scale_factor = 2;
        let l2 = generate_left(&cfg);
        assert_eq!(l2.row_count(), 2 * l1.row_count());
        let r2 = generate_right(&cfg);
        assert_eq!(r2.row_count(), 2 * 540);
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = small();
        let a = generate_left(&cfg);
        let b = generate_left(&cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn bench_report_matches_contract() {
        let cfg = small();
        let rep = run_bench(&cfg).unwrap();
        assert_eq!(rep.left_rows, 500);
        assert_eq!(rep.right_rows, 540);
        // Output close to match_rate * left (binomial fluctuation).
        assert!(rep.out_rows > 350 && rep.out_rows < 500, "out={}", rep.out_rows);
        assert!(rep.tensor_bytes > 0);
        assert!(rep.q1_avg_ms >= 0.0);
        let line = rep.csv_line();
        assert_eq!(line.split(',').count(), BENCH_CSV_HEADER.split(',').count());
    }

    #[test]
    fn match_rate_bounds_validated() {
        let mut cfg = small();
        cfg.match_rate = 1.5;
        assert!(run_bench(&cfg).is_err());
        cfg.match_rate = 0.9;
        cfg.scale_factor = 0;
        assert!(run_bench(&cfg).is_err());
    }
}
