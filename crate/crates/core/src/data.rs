//! Intraday price ingestion, cleaning, and cumulative intraday return (CIDR) curves.
//!
//! Cleaning rules, applied per security in this order:
//! 1. multiply prices (and the day's low/high) by the adjustment factor when one is given;
//! 2. drop the security if more than 5% of its price slots are missing, otherwise forward-fill
//!    each gap with the latest available price (earlier slot of the same day, else the previous
//!    retained day's close); a day whose open cannot be filled is dropped;
//! 3. on days with both low and high, prices outside `[0.98·low, 1.02·high]` are replaced the
//!    same way; the security is dropped if more than 5% of its dates had a violation;
//! 4. drop holiday dates;
//! 5. drop securities with fewer than 252 remaining trading days.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::sim::CurvePanel;

/// One trading day of one security.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// Prices at slots `0..=m`; slot 0 is the open.
    pub prices: Vec<Option<f64>>,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub adjust_factor: Option<f64>,
    pub holiday: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawIntradayTable {
    pub m: usize,
    pub securities: BTreeMap<String, BTreeMap<NaiveDate, DayRecord>>,
}

impl RawIntradayTable {
    pub fn n_days(&self) -> usize {
        self.securities.values().map(BTreeMap::len).sum()
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv(std::io::BufReader::new(f))
    }

    /// Reads `security_id,date,k,price[,low,high,adjust_factor,holiday_flag]` (header
    /// required, optional columns in any order). An empty price, or an absent `(security,
    /// date, k)` row, is a missing value.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (Some(c_sec), Some(c_date), Some(c_k), Some(c_price)) =
            (col("security_id"), col("date"), col("k"), col("price"))
        else {
            return Err(Error::Data("line 1: header must name security_id, date, k and price columns".into()));
        };
        let (c_low, c_high, c_adj, c_hol) = (col("low"), col("high"), col("adjust_factor"), col("holiday_flag"));

        struct Row {
            line: u64,
            sec: String,
            date: NaiveDate,
            k: usize,
            price: Option<f64>,
            low: Option<f64>,
            high: Option<f64>,
            adj: Option<f64>,
            holiday: Option<bool>,
        }

        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Data(format!("line {line}: {e}"))
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |what: &str| Error::Data(format!("line {line}: {what}"));
            let field = |c: usize| rec.get(c).unwrap_or("");
            let opt_num = |c: Option<usize>, name: &str| -> Result<Option<f64>> {
                match c.map(field).filter(|s| !s.is_empty()) {
                    None => Ok(None),
                    Some(s) => {
                        let v: f64 = s.parse().map_err(|_| bad(&format!("{name} '{s}' is not a number")))?;
                        if !(v.is_finite() && v > 0.0) {
                            return Err(bad(&format!("{name} must be positive, got {s}")));
                        }
                        Ok(Some(v))
                    }
                }
            };
            let sec = field(c_sec).to_string();
            if sec.is_empty() {
                return Err(bad("empty security_id"));
            }
            let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d")
                .map_err(|_| bad(&format!("date '{}' is not YYYY-MM-DD", field(c_date))))?;
            let k: usize = field(c_k)
                .parse()
                .map_err(|_| bad(&format!("slot index '{}' is not a nonnegative integer", field(c_k))))?;
            let holiday = match c_hol.map(field).filter(|s| !s.is_empty()) {
                None => None,
                Some("1") | Some("true") | Some("TRUE") | Some("True") => Some(true),
                Some("0") | Some("false") | Some("FALSE") | Some("False") => Some(false),
                Some(s) => return Err(bad(&format!("holiday_flag '{s}' is not 0/1/true/false"))),
            };
            rows.push(Row {
                line,
                sec,
                date,
                k,
                price: opt_num(Some(c_price), "price")?,
                low: opt_num(c_low, "low")?,
                high: opt_num(c_high, "high")?,
                adj: opt_num(c_adj, "adjust_factor")?,
                holiday,
            });
        }
        if rows.is_empty() {
            return Err(Error::Data("price file holds no rows".into()));
        }
        let m = rows.iter().map(|r| r.k).max().unwrap();
        TimeGrid::new(m).map_err(|_| Error::Data(format!("slot indices span only 0..={m}; need m >= 2")))?;

        let mut securities: BTreeMap<String, BTreeMap<NaiveDate, DayRecord>> = BTreeMap::new();
        let mut seen: BTreeSet<(String, NaiveDate, usize)> = BTreeSet::new();
        for r in rows {
            if !seen.insert((r.sec.clone(), r.date, r.k)) {
                return Err(Error::Data(format!(
                    "line {}: duplicate row for {} {} k = {}",
                    r.line, r.sec, r.date, r.k
                )));
            }
            let day = securities.entry(r.sec.clone()).or_default().entry(r.date).or_insert_with(|| DayRecord {
                prices: vec![None; m + 1],
                low: None,
                high: None,
                adjust_factor: None,
                holiday: false,
            });
            day.prices[r.k] = r.price;
            let merge = |slot: &mut Option<f64>, v: Option<f64>, name: &str| -> Result<()> {
                if let Some(v) = v {
                    match *slot {
                        Some(old) if old != v => {
                            return Err(Error::Data(format!(
                                "line {}: {name} {v} conflicts with {old} given earlier for {} {}",
                                r.line, r.sec, r.date
                            )))
                        }
                        _ => *slot = Some(v),
                    }
                }
                Ok(())
            };
            merge(&mut day.low, r.low, "low")?;
            merge(&mut day.high, r.high, "high")?;
            merge(&mut day.adjust_factor, r.adj, "adjust_factor")?;
            if r.holiday == Some(true) {
                day.holiday = true;
            }
        }
        Ok(Self { m, securities })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub max_missing_rate: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub max_band_violation_rate: f64,
    pub min_trading_days: usize,
    /// Extra holiday dates on top of per-row flags.
    pub holiday_dates: BTreeSet<NaiveDate>,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self {
            max_missing_rate: 0.05,
            band_low: 0.98,
            band_high: 1.02,
            max_band_violation_rate: 0.05,
            min_trading_days: 252,
            holiday_dates: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Security: more than the allowed share of price slots missing.
    ExcessMissing,
    /// Day: missing opening price with no earlier price to carry forward.
    UnfillableMissing,
    /// Security: too many dates with out-of-band prices.
    ExcessBandViolations,
    /// Day: out-of-band opening price with no earlier price to carry forward.
    UnfillableBandViolation,
    /// Day: holiday session.
    Holiday,
    /// Security: too few trading days.
    ShortHistory,
}

impl DropReason {
    /// Number of the cleaning rule that produced the drop.
    pub fn rule(self) -> u8 {
        match self {
            DropReason::ExcessMissing | DropReason::UnfillableMissing => 2,
            DropReason::ExcessBandViolations | DropReason::UnfillableBandViolation => 3,
            DropReason::Holiday => 4,
            DropReason::ShortHistory => 5,
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayDrop {
    pub security: String,
    pub date: NaiveDate,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityDrop {
    pub security: String,
    pub reason: DropReason,
    /// Days the security still had when it was dropped.
    pub days: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounters {
    pub rule1_adjusted_days: usize,
    pub rule2_imputed: usize,
    pub rule3_replaced: usize,
    pub rule3_violating_days: usize,
    /// Days without both bounds, on which the band check could not run.
    pub rule3_skipped_days: usize,
    pub rule4_holiday_days: usize,
    pub rule5_short_securities: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_days: usize,
    pub retained_days: usize,
    pub days_dropped: Vec<DayDrop>,
    pub securities_dropped: Vec<SecurityDrop>,
    pub values_imputed: usize,
    pub rule_counters: RuleCounters,
}

impl CleaningReport {
    /// Drops per reason code (days and securities together).
    pub fn reason_counts(&self) -> BTreeMap<DropReason, usize> {
        let mut out = BTreeMap::new();
        for d in &self.days_dropped {
            *out.entry(d.reason).or_insert(0) += 1;
        }
        for s in &self.securities_dropped {
            *out.entry(s.reason).or_insert(0) += 1;
        }
        out
    }

    /// `input = retained + dropped days + days of dropped securities`.
    pub fn is_consistent(&self) -> bool {
        let sec_days: usize = self.securities_dropped.iter().map(|s| s.days).sum();
        self.input_days == self.retained_days + self.days_dropped.len() + sec_days
    }

    /// Nothing was altered or removed; days merely skipped by the band check do not count.
    pub fn is_empty(&self) -> bool {
        let c = RuleCounters { rule3_skipped_days: 0, ..self.rule_counters.clone() };
        self.days_dropped.is_empty()
            && self.securities_dropped.is_empty()
            && self.values_imputed == 0
            && c == RuleCounters::default()
    }
}

/// Forward-fills the slots flagged in `bad` from the latest available price. Returns the
/// number of filled slots, or `None` if slot 0 needs a fill and there is no previous close.
fn fill_day(prices: &mut [Option<f64>], bad: &[bool], prev_close: Option<f64>) -> Option<usize> {
    let mut filled = 0;
    for k in 0..prices.len() {
        if bad[k] {
            let src = if k == 0 { prev_close } else { prices[k - 1] };
            prices[k] = Some(src?);
            filled += 1;
        }
    }
    Some(filled)
}

/// Applies the five cleaning rules. Output days have complete, positive price vectors and
/// no adjustment factors.
pub fn clean(raw: &RawIntradayTable, policy: &CleaningPolicy) -> (RawIntradayTable, CleaningReport) {
    let mut report = CleaningReport { input_days: raw.n_days(), ..Default::default() };
    let mut out = BTreeMap::new();
    let slots = raw.m + 1;

    for (sec, days) in &raw.securities {
        let mut days = days.clone();

        // rule 1
        for d in days.values_mut() {
            if let Some(f) = d.adjust_factor.take() {
                for p in d.prices.iter_mut().flatten() {
                    *p *= f;
                }
                d.low = d.low.map(|v| v * f);
                d.high = d.high.map(|v| v * f);
                report.rule_counters.rule1_adjusted_days += 1;
            }
        }

        // rule 2
        let missing: usize = days.values().map(|d| d.prices.iter().filter(|p| p.is_none()).count()).sum();
        let total = days.len() * slots;
        if total > 0 && missing as f64 > policy.max_missing_rate * total as f64 {
            report.securities_dropped.push(SecurityDrop {
                security: sec.clone(),
                reason: DropReason::ExcessMissing,
                days: days.len(),
            });
            continue;
        }
        let mut prev_close: Option<f64> = None;
        let mut kept = BTreeMap::new();
        for (date, mut d) in days {
            let bad: Vec<bool> = d.prices.iter().map(Option::is_none).collect();
            match fill_day(&mut d.prices, &bad, prev_close) {
                Some(n) => {
                    report.rule_counters.rule2_imputed += n;
                    report.values_imputed += n;
                    prev_close = d.prices[raw.m];
                    kept.insert(date, d);
                }
                None => report.days_dropped.push(DayDrop {
                    security: sec.clone(),
                    date,
                    reason: DropReason::UnfillableMissing,
                }),
            }
        }
        let days = kept;

        // rule 3
        let in_band = |d: &DayRecord, p: f64| match (d.low, d.high) {
            (Some(lo), Some(hi)) => p >= policy.band_low * lo && p <= policy.band_high * hi,
            _ => true,
        };
        let mut violating = 0;
        let mut skipped = 0;
        for d in days.values() {
            if d.low.is_none() || d.high.is_none() {
                skipped += 1;
            } else if d.prices.iter().flatten().any(|&p| !in_band(d, p)) {
                violating += 1;
            }
        }
        report.rule_counters.rule3_skipped_days += skipped;
        report.rule_counters.rule3_violating_days += violating;
        if !days.is_empty() && violating as f64 > policy.max_band_violation_rate * days.len() as f64 {
            report.securities_dropped.push(SecurityDrop {
                security: sec.clone(),
                reason: DropReason::ExcessBandViolations,
                days: days.len(),
            });
            continue;
        }
        let mut prev_close: Option<f64> = None;
        let mut kept = BTreeMap::new();
        for (date, mut d) in days {
            let bad: Vec<bool> = d.prices.iter().map(|p| !in_band(&d, p.expect("filled"))).collect();
            // a carried-forward price may itself be out of band; it is kept as the best
            // available value rather than dropping the day
            match fill_day(&mut d.prices, &bad, prev_close) {
                Some(n) => {
                    report.rule_counters.rule3_replaced += n;
                    report.values_imputed += n;
                    prev_close = d.prices[raw.m];
                    kept.insert(date, d);
                }
                None => report.days_dropped.push(DayDrop {
                    security: sec.clone(),
                    date,
                    reason: DropReason::UnfillableBandViolation,
                }),
            }
        }
        let mut days = kept;

        // rule 4
        let holidays: Vec<NaiveDate> = days
            .iter()
            .filter(|(date, d)| d.holiday || policy.holiday_dates.contains(date))
            .map(|(date, _)| *date)
            .collect();
        for date in holidays {
            days.remove(&date);
            report.rule_counters.rule4_holiday_days += 1;
            report.days_dropped.push(DayDrop { security: sec.clone(), date, reason: DropReason::Holiday });
        }

        // rule 5
        if days.len() < policy.min_trading_days {
            report.rule_counters.rule5_short_securities += 1;
            report.securities_dropped.push(SecurityDrop {
                security: sec.clone(),
                reason: DropReason::ShortHistory,
                days: days.len(),
            });
            continue;
        }
        report.retained_days += days.len();
        out.insert(sec.clone(), days);
    }
    (RawIntradayTable { m: raw.m, securities: out }, report)
}

/// `R(t_k) = log P(t_k) − log P(t_0)`, one curve per (security, date), ordered by security
/// then date, with ids `SECURITY:YYYY-MM-DD`.
pub fn compute_cidr(table: &RawIntradayTable) -> Result<CurvePanel<f64>> {
    let grid = TimeGrid::new(table.m).map_err(|_| Error::Data(format!("grid m = {} < 2", table.m)))?;
    let mut values = Vec::new();
    let mut ids = Vec::new();
    for (sec, days) in &table.securities {
        for (date, d) in days {
            let logs = d
                .prices
                .iter()
                .enumerate()
                .map(|(k, p)| match p {
                    Some(v) if *v > 0.0 && v.is_finite() => Ok(v.ln()),
                    Some(v) => Err(Error::Data(format!("{sec} {date} k = {k}: nonpositive price {v}"))),
                    None => Err(Error::Data(format!("{sec} {date} k = {k}: missing price"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            values.extend(logs.iter().map(|l| l - logs[0]));
            ids.push(format!("{sec}:{date}"));
        }
    }
    if ids.is_empty() {
        return Err(Error::Data("no (security, date) pairs survive cleaning".into()));
    }
    CurvePanel::new(grid, ids.len(), values)?.with_ids(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(prices: &[f64]) -> DayRecord {
        DayRecord {
            prices: prices.iter().map(|&p| Some(p)).collect(),
            low: Some(prices.iter().cloned().fold(f64::INFINITY, f64::min)),
            high: Some(prices.iter().cloned().fold(0.0, f64::max)),
            adjust_factor: None,
            holiday: false,
        }
    }

    fn table(days: usize, f: impl Fn(usize) -> DayRecord) -> RawIntradayTable {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let map = (0..days).map(|i| (start + chrono::Days::new(i as u64), f(i))).collect();
        RawIntradayTable { m: 2, securities: BTreeMap::from([("X".to_string(), map)]) }
    }

    fn policy(min_days: usize) -> CleaningPolicy {
        CleaningPolicy { min_trading_days: min_days, ..Default::default() }
    }

    #[test]
    fn clean_table_is_untouched() {
        let t = table(10, |i| day(&[100.0 + i as f64, 100.5 + i as f64, 101.0 + i as f64]));
        let (c, rep) = clean(&t, &policy(5));
        assert_eq!(c, t);
        assert!(rep.is_empty());
        assert!(rep.is_consistent());
    }

    #[test]
    fn excess_missing_drops_security() {
        // 2 of 30 slots missing: 6.7% > 5%
        let t = table(10, |i| {
            let mut d = day(&[100.0, 100.0, 100.0]);
            if i < 2 {
                d.prices[1] = None;
            }
            d
        });
        let (c, rep) = clean(&t, &policy(5));
        assert!(c.securities.is_empty());
        assert_eq!(rep.securities_dropped[0].reason, DropReason::ExcessMissing);
        assert_eq!(rep.securities_dropped[0].reason.rule(), 2);
    }

    #[test]
    fn forward_fill_within_and_across_days() {
        let t = table(40, |i| {
            let mut d = day(&[100.0 + i as f64, 101.0 + i as f64, 102.0 + i as f64]);
            if i == 3 {
                d.prices[2] = None;
            }
            if i == 7 {
                d.prices[0] = None;
            }
            d
        });
        let (c, rep) = clean(&t, &policy(5));
        let days: Vec<&DayRecord> = c.securities["X"].values().collect();
        assert_eq!(days[3].prices[2], Some(104.0));
        assert_eq!(days[7].prices[0], Some(108.0));
        assert_eq!(rep.values_imputed, 2);
        assert!(rep.days_dropped.is_empty());
    }

    #[test]
    fn unfillable_open_drops_day() {
        let t = table(40, |i| {
            let mut d = day(&[100.0, 100.0, 100.0]);
            if i == 0 {
                d.prices[0] = None;
            }
            d
        });
        let (c, rep) = clean(&t, &policy(5));
        assert_eq!(c.securities["X"].len(), 39);
        assert_eq!(rep.days_dropped[0].reason, DropReason::UnfillableMissing);
        assert!(rep.is_consistent());
    }

    #[test]
    fn band_violation_replaced_by_previous_price() {
        let t = table(40, |i| {
            let mut d = day(&[100.0, 101.0, 102.0]);
            if i == 5 {
                d.prices[2] = Some(1.03 * 102.0);
            }
            d
        });
        let (c, rep) = clean(&t, &policy(5));
        let d5 = c.securities["X"].values().nth(5).unwrap();
        assert_eq!(d5.prices[2], Some(101.0));
        assert_eq!(rep.values_imputed, 1);
        assert_eq!(rep.rule_counters.rule3_replaced, 1);
        assert_eq!(rep.rule_counters.rule3_violating_days, 1);
    }

    #[test]
    fn edge_of_band_is_accepted() {
        let t = table(10, |_| {
            let mut d = day(&[100.0, 100.0, 100.0]);
            d.prices[1] = Some(1.02 * 100.0);
            d.high = Some(100.0);
            d
        });
        let (_, rep) = clean(&t, &policy(5));
        assert_eq!(rep.rule_counters.rule3_violating_days, 0);
    }

    #[test]
    fn adjustment_and_holidays_and_history() {
        let t = table(12, |i| {
            let mut d = day(&[50.0, 50.5, 51.0]);
            if i % 2 == 0 {
                d.adjust_factor = Some(2.0);
            } else {
                d.prices = d.prices.iter().map(|p| p.map(|v| v * 2.0)).collect();
                d.low = d.low.map(|v| v * 2.0);
                d.high = d.high.map(|v| v * 2.0);
            }
            d.holiday = i == 4;
            d
        });
        let (c, rep) = clean(&t, &policy(11));
        assert_eq!(rep.rule_counters.rule1_adjusted_days, 6);
        assert_eq!(rep.rule_counters.rule4_holiday_days, 1);
        assert!(c.securities["X"].values().all(|d| d.prices[0] == Some(100.0) && d.adjust_factor.is_none()));
        let (c2, rep2) = clean(&t, &policy(12));
        assert!(c2.securities.is_empty());
        assert_eq!(rep2.securities_dropped[0].reason, DropReason::ShortHistory);
        assert_eq!(rep2.securities_dropped[0].days, 11);
        assert!(rep2.is_consistent());
    }

    #[test]
    fn cidr_by_hand() {
        let t = table(1, |_| day(&[100.0, 101.0, 99.5]));
        let p = compute_cidr(&t).unwrap();
        assert_eq!(p.row(0), &[0.0, (101.0f64).ln() - (100.0f64).ln(), (99.5f64).ln() - (100.0f64).ln()]);
        assert!((p.row(0)[1] - 1.01f64.ln()).abs() < 1e-15);
        assert_eq!(p.ids().unwrap()[0], "X:2020-01-01");
        let flat = table(1, |_| day(&[7.0, 7.0, 7.0]));
        assert_eq!(compute_cidr(&flat).unwrap().row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_parsing_and_errors() {
        let good = "security_id,date,k,price,low,high\nA,2020-01-02,0,10,9.9,10.2\nA,2020-01-02,1,,9.9,10.2\nA,2020-01-02,2,10.1,,\n";
        let t = RawIntradayTable::from_csv(good.as_bytes()).unwrap();
        assert_eq!(t.m, 2);
        let d = &t.securities["A"][&NaiveDate::from_ymd_opt(2020, 1, 2).unwrap()];
        assert_eq!(d.prices, vec![Some(10.0), None, Some(10.1)]);
        assert_eq!((d.low, d.high), (Some(9.9), Some(10.2)));

        let bad = "security_id,date,k,price\nA,2020-01-02,0,10\nA,2020-01-02,1,ten\n";
        match RawIntradayTable::from_csv(bad.as_bytes()) {
            Err(Error::Data(msg)) => assert!(msg.starts_with("line 3:"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let neg = "security_id,date,k,price\nA,2020-01-02,0,10\nA,2020-01-02,1,-1\nA,2020-01-02,2,1\n";
        assert!(matches!(RawIntradayTable::from_csv(neg.as_bytes()), Err(Error::Data(m)) if m.contains("line 3")));
        let date = "security_id,date,k,price\nA,02/01/2020,0,10\n";
        assert!(matches!(RawIntradayTable::from_csv(date.as_bytes()), Err(Error::Data(m)) if m.contains("line 2")));
    }
}
