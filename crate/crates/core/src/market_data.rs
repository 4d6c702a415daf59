//! OHLCV ingestion, validation and date-range splitting.
//!
//! Input files follow the Yahoo historical-CSV layout:
//! `Date,Open,High,Low,Close,Adj Close,Volume` (the `Adj Close` column may be
//! absent and is ignored when present).

use std::fmt::Write as _;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// One trading day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

impl Bar {
    /// Builds a bar, checking price positivity and that high/low bracket the body.
    pub fn new(date: NaiveDate, open: f64, high: f64, low: f64, close: f64, volume: u64) -> Result<Self> {
        let bar = Bar { date, open, high, low, close, volume };
        bar.validate().map_err(Error::Contract)?;
        Ok(bar)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, p) in [("open", self.open), ("high", self.high), ("low", self.low), ("close", self.close)] {
            if !p.is_finite() || p <= 0.0 {
                return Err(format!("{name} price {p} is not strictly positive"));
            }
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above body min {}", self.low, self.open.min(self.close)));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below body max {}", self.high, self.open.max(self.close)));
        }
        Ok(())
    }

    /// Close strictly above open.
    pub fn is_bullish(&self) -> bool {
        self.close > self.open
    }
}

/// Ordered bars of one instrument; dates strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    ticker: String,
    bars: Vec<Bar>,
}

impl Series {
    pub fn new(ticker: impl Into<String>, bars: Vec<Bar>) -> Result<Self> {
        for (i, pair) in bars.windows(2).enumerate() {
            if pair[1].date <= pair[0].date {
                return Err(Error::Contract(format!(
                    "bars {} and {} are not strictly increasing ({} then {})",
                    i,
                    i + 1,
                    pair[0].date,
                    pair[1].date
                )));
            }
        }
        for bar in &bars {
            bar.validate().map_err(Error::Contract)?;
        }
        Ok(Series { ticker: ticker.into(), bars })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    /// Bars whose date lies in `[start, end]`.
    pub fn range(&self, start: NaiveDate, end: NaiveDate) -> Series {
        let bars = self.bars.iter().filter(|b| b.date >= start && b.date <= end).copied().collect();
        Series { ticker: self.ticker.clone(), bars }
    }
}

/// Result of [`parse_csv`]: the series plus how many rows the skip policy dropped.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub series: Series,
    pub skipped: usize,
}

const REQUIRED: [&str; 5] = ["Date", "Open", "High", "Low", "Close"];

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("null")
}

fn parse_price(field: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Row { line, reason: format!("bad {name} '{field}'") })?;
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Row { line, reason: format!("{name} {v} is not strictly positive") });
    }
    Ok(v)
}

fn parse_volume(field: &str, line: usize) -> Result<u64> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 => Ok(v as u64),
        _ => Err(Error::Row { line, reason: format!("bad volume '{field}'") }),
    }
}

/// Parses a Yahoo-layout CSV into a validated [`Series`].
///
/// Rows with an empty or `null` field are skipped, as are repeated dates
/// after their first occurrence. Anything else that fails to parse or
/// violates the bar invariants is a [`Error::Row`] carrying the 1-based
/// line number.
pub fn parse_csv(text: &str, ticker: &str) -> Result<Parsed> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim_start_matches('\u{feff}'),
            None => return Err(Error::Format("missing header row".into())),
        }
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_adj = match cols.as_slice() {
        [d, o, h, l, c, v] if [*d, *o, *h, *l, *c] == REQUIRED && *v == "Volume" => false,
        [d, o, h, l, c, a, v] if [*d, *o, *h, *l, *c] == REQUIRED && *a == "Adj Close" && *v == "Volume" => true,
        _ => {
            return Err(Error::Format(format!(
                "expected header 'Date,Open,High,Low,Close[,Adj Close],Volume', got '{header}'"
            )))
        }
    };
    let width = if with_adj { 7 } else { 6 };

    let mut bars: Vec<Bar> = Vec::new();
    let mut skipped = 0;
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Row { line, reason: format!("expected {width} fields, found {}", fields.len()) });
        }
        if fields.iter().any(|f| is_missing(f)) {
            skipped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|_| Error::Row { line, reason: format!("bad date '{}'", fields[0]) })?;
        let open = parse_price(fields[1], "open", line)?;
        let high = parse_price(fields[2], "high", line)?;
        let low = parse_price(fields[3], "low", line)?;
        let close = parse_price(fields[4], "close", line)?;
        let volume = parse_volume(fields[width - 1], line)?;
        let bar = Bar { date, open, high, low, close, volume };
        bar.validate().map_err(|reason| Error::Row { line, reason })?;
        bars.push(bar);
    }

    // stable sort keeps file order among equal dates, so dedup keeps the first
    bars.sort_by_key(|b| b.date);
    let before = bars.len();
    bars.dedup_by_key(|b| b.date);
    skipped += before - bars.len();

    if bars.is_empty() {
        return Err(Error::Data(format!("{ticker}: no valid rows")));
    }
    Ok(Parsed { series: Series { ticker: ticker.to_string(), bars }, skipped })
}

/// Writes a series back out in the same layout `parse_csv` reads
/// (`Adj Close` is filled with the close).
pub fn serialize_csv(series: &Series) -> String {
    let mut out = String::from("Date,Open,High,Low,Close,Adj Close,Volume\n");
    for b in &series.bars {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            b.date.format("%Y-%m-%d"),
            b.open,
            b.high,
            b.low,
            b.close,
            b.close,
            b.volume
        );
    }
    out
}

/// Closed date ranges for the train, test and independent partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub indep_start: NaiveDate,
    pub indep_end: NaiveDate,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

impl SplitSpec {
    pub fn new(
        train: (NaiveDate, NaiveDate),
        test: (NaiveDate, NaiveDate),
        indep: (NaiveDate, NaiveDate),
    ) -> Result<Self> {
        let spec = SplitSpec {
            train_start: train.0,
            train_end: train.1,
            test_start: test.0,
            test_end: test.1,
            indep_start: indep.0,
            indep_end: indep.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The ranges used for both the Taiwan 50 and Indonesia 10 sets:
    /// train 2000-01-01..2016-12-31, test and independent 2017-01-01..2018-06-14.
    pub fn taiwan_indonesia() -> Self {
        SplitSpec {
            train_start: ymd(2000, 1, 1),
            train_end: ymd(2016, 12, 31),
            test_start: ymd(2017, 1, 1),
            test_end: ymd(2018, 6, 14),
            indep_start: ymd(2017, 1, 1),
            indep_end: ymd(2018, 6, 14),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s, e) in [
            ("train", self.train_start, self.train_end),
            ("test", self.test_start, self.test_end),
            ("independent", self.indep_start, self.indep_end),
        ] {
            if s > e {
                return Err(Error::Config(format!("{name} range starts {s} after it ends {e}")));
            }
        }
        if self.train_end >= self.test_start {
            return Err(Error::Config(format!(
                "train_end {} must precede test_start {}",
                self.train_end, self.test_start
            )));
        }
        Ok(())
    }
}

/// Output of [`split`]. The `*_empty` flags are warnings, not errors.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Series,
    pub test: Series,
    pub independent: Series,
    pub train_empty: bool,
    pub test_empty: bool,
    pub independent_empty: bool,
}

impl SplitResult {
    pub fn any_empty(&self) -> bool {
        self.train_empty || self.test_empty || self.independent_empty
    }
}

/// Cuts a series into the three closed date ranges, preserving order.
pub fn split(series: &Series, spec: &SplitSpec) -> Result<SplitResult> {
    spec.validate()?;
    let train = series.range(spec.train_start, spec.train_end);
    let test = series.range(spec.test_start, spec.test_end);
    let independent = series.range(spec.indep_start, spec.indep_end);
    Ok(SplitResult {
        train_empty: train.is_empty(),
        test_empty: test.is_empty(),
        independent_empty: independent.is_empty(),
        train,
        test,
        independent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume\n";

    #[test]
    fn parses_single_row() {
        let text = format!("{HEADER}2017-01-03,100.0,101.5,99.0,101.0,101.0,1000000\n");
        let parsed = parse_csv(&text, "TEST").unwrap();
        assert_eq!(parsed.skipped, 0);
        let b = parsed.series.bars()[0];
        assert_eq!(parsed.series.len(), 1);
        assert_eq!(b.date, ymd(2017, 1, 3));
        assert_eq!((b.open, b.high, b.low, b.close, b.volume), (100.0, 101.5, 99.0, 101.0, 1_000_000));
    }

    #[test]
    fn sorts_ascending() {
        let text = format!("{HEADER}2017-01-04,1,2,1,2,2,10\n2017-01-03,1,2,1,1.5,1.5,10\n");
        let s = parse_csv(&text, "T").unwrap().series;
        assert_eq!(s.first_date(), Some(ymd(2017, 1, 3)));
        assert_eq!(s.last_date(), Some(ymd(2017, 1, 4)));
    }

    #[test]
    fn inverted_high_low_is_row_error() {
        let text = format!("{HEADER}2017-01-03,100,99.0,101.0,100,100,5\n");
        match parse_csv(&text, "T") {
            Err(Error::Row { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn header_without_adj_close() {
        let text = "Date,Open,High,Low,Close,Volume\n2017-01-03,1,2,0.5,1.5,7\n";
        let s = parse_csv(text, "T").unwrap().series;
        assert_eq!(s.bars()[0].volume, 7);
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(parse_csv("Date,Close\n", "T"), Err(Error::Format(_))));
        assert!(matches!(parse_csv("", "T"), Err(Error::Format(_))));
    }

    #[test]
    fn null_rows_and_duplicates_are_skipped() {
        let text = format!(
            "{HEADER}2017-01-03,1,2,1,2,2,10\n2017-01-04,null,null,null,null,null,null\n\
             2017-01-03,5,6,5,6,6,10\n2017-01-05,1,2,1,2,2,\n"
        );
        let parsed = parse_csv(&text, "T").unwrap();
        assert_eq!(parsed.skipped, 3);
        assert_eq!(parsed.series.len(), 1);
        assert_eq!(parsed.series.bars()[0].open, 1.0);
    }

    #[test]
    fn bad_date_and_negative_price() {
        let bad_date = format!("{HEADER}2017-13-03,1,2,1,2,2,10\n");
        assert!(matches!(parse_csv(&bad_date, "T"), Err(Error::Row { line: 2, .. })));
        let neg = format!("{HEADER}2017-01-03,-1,2,1,2,2,10\n");
        assert!(matches!(parse_csv(&neg, "T"), Err(Error::Row { line: 2, .. })));
    }

    #[test]
    fn split_table_boundaries() {
        let bars = vec![
            Bar::new(ymd(2016, 12, 30), 10.0, 11.0, 9.0, 10.5, 1).unwrap(),
            Bar::new(ymd(2017, 1, 2), 10.0, 11.0, 9.0, 10.5, 1).unwrap(),
        ];
        let s = Series::new("TW", bars).unwrap();
        let r = split(&s, &SplitSpec::taiwan_indonesia()).unwrap();
        assert_eq!(r.train.first_date(), Some(ymd(2016, 12, 30)));
        assert_eq!(r.test.first_date(), Some(ymd(2017, 1, 2)));
        assert_eq!(r.train.len(), 1);
        assert_eq!(r.test.len(), 1);
    }

    #[test]
    fn split_empty_series_flags_all() {
        let s = Series::new("E", vec![]).unwrap();
        let r = split(&s, &SplitSpec::taiwan_indonesia()).unwrap();
        assert!(r.train_empty && r.test_empty && r.independent_empty);
    }

    #[test]
    fn split_end_date_is_inclusive() {
        let s = Series::new("T", vec![Bar::new(ymd(2016, 12, 31), 1.0, 1.0, 1.0, 1.0, 0).unwrap()]).unwrap();
        let r = split(&s, &SplitSpec::taiwan_indonesia()).unwrap();
        assert_eq!(r.train.len(), 1);
        assert!(r.test_empty);
    }

    #[test]
    fn overlapping_train_test_rejected() {
        let d = ymd(2017, 1, 1);
        assert!(SplitSpec::new((d, d), (d, d), (d, d)).is_err());
    }

    #[test]
    fn unordered_series_rejected() {
        let b = Bar::new(ymd(2017, 1, 3), 1.0, 1.0, 1.0, 1.0, 0).unwrap();
        assert!(Series::new("T", vec![b, b]).is_err());
    }
}
