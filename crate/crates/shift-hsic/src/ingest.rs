//! Real-data pipeline: tick loading, time-window granulation,
//! differencing and alignment.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmtnum::fmt_f64;
use crate::statistic::SeriesPair;

/// Irregularly spaced ticks: strictly increasing epoch-millisecond
/// timestamps and one price per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub timestamps: Vec<i64>,
    pub prices: Vec<f64>,
    pub name: String,
}

impl TickSeries {
    pub fn new(timestamps: Vec<i64>, prices: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::InvalidInput("timestamp/price length mismatch".into()));
        }
        if timestamps.is_empty() {
            return Err(Error::EmptyInput("tick series".into()));
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::OrderError { line: i + 2 });
            }
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite price".into()));
        }
        Ok(TickSeries {
            timestamps,
            prices,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// What to do with time windows containing no ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPolicy {
    /// Repeat the previous window's value (prices persist between ticks).
    CarryForward,
    /// Leave the slot empty; alignment later drops it from both series.
    Drop,
}

/// A series on a fixed time grid. Slots may be empty only under
/// [`GapPolicy::Drop`]; alignment removes them.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularSeries {
    pub start: i64,
    pub interval: i64,
    pub values: Vec<Option<f64>>,
    pub name: String,
    pub gap_policy: GapPolicy,
}

impl RegularSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, slot: usize) -> i64 {
        self.start + slot as i64 * self.interval
    }
}

/// Parse a two-column CSV `timestamp_ms,price`, header optional. The
/// series name is taken from the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TickSeries> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut cols = trimmed.split(',');
        let (ts_raw, price_raw) = match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::ParseError {
                    line: line_no,
                    message: "expected exactly two columns".into(),
                })
            }
        };
        let parsed = ts_raw
            .parse::<i64>()
            .ok()
            .zip(price_raw.parse::<f64>().ok());
        match parsed {
            Some((ts, price)) => {
                if !price.is_finite() {
                    return Err(Error::ParseError {
                        line: line_no,
                        message: format!("non-finite price {price_raw}"),
                    });
                }
                if let Some(&last) = timestamps.last() {
                    if ts <= last {
                        return Err(Error::OrderError { line: line_no });
                    }
                }
                timestamps.push(ts);
                prices.push(price);
            }
            None if line_no == 1 => continue, // header
            None => {
                return Err(Error::ParseError {
                    line: line_no,
                    message: format!("cannot parse row '{trimmed}'"),
                })
            }
        }
    }
    TickSeries::new(timestamps, prices, name)
}

/// Map ticks onto a fixed grid: window `[start + k*interval,
/// start + (k+1)*interval)` takes the last tick price inside it. The grid
/// start is the interval-aligned floor of the first timestamp.
///
/// ```
/// use shift_hsic::ingest::{granulate, GapPolicy, TickSeries};
/// let ticks = TickSeries::new(vec![10, 50, 130], vec![1.0, 2.0, 3.0], "eurusd").unwrap();
/// let grid = granulate(&ticks, 60, GapPolicy::CarryForward).unwrap();
/// assert_eq!(grid.start, 0);
/// assert_eq!(grid.values, vec![Some(2.0), Some(2.0), Some(3.0)]);
/// ```
pub fn granulate(ticks: &TickSeries, interval: i64, gap_policy: GapPolicy) -> Result<RegularSeries> {
    if interval <= 0 {
        return Err(Error::InvalidInput(format!(
            "granulation interval must be positive, got {interval}"
        )));
    }
    if ticks.is_empty() {
        return Err(Error::EmptyInput("no ticks to granulate".into()));
    }
    let start = ticks.timestamps[0].div_euclid(interval) * interval;
    let last = *ticks.timestamps.last().unwrap();
    let slots = ((last - start).div_euclid(interval) + 1) as usize;
    let mut values: Vec<Option<f64>> = vec![None; slots];
    for (&ts, &price) in ticks.timestamps.iter().zip(&ticks.prices) {
        let slot = ((ts - start).div_euclid(interval)) as usize;
        values[slot] = Some(price); // ticks are ordered, later wins
    }
    if gap_policy == GapPolicy::CarryForward {
        let mut prev = None;
        for v in values.iter_mut() {
            match *v {
                Some(x) => prev = Some(x),
                None => *v = prev,
            }
        }
    }
    Ok(RegularSeries {
        start,
        interval,
        values,
        name: ticks.name.clone(),
        gap_policy,
    })
}

/// First differences: output slot `t` holds `input[t+1] - input[t]` and
/// carries the later timestamp. A difference across an empty slot stays
/// empty.
pub fn difference(series: &RegularSeries) -> Result<RegularSeries> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: series.len(),
        });
    }
    let values = series
        .values
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        })
        .collect();
    Ok(RegularSeries {
        start: series.start + series.interval,
        interval: series.interval,
        values,
        name: format!("d_{}", series.name),
        gap_policy: series.gap_policy,
    })
}

/// Pointwise product of two aligned regular series (exchange-rate
/// composition). Multiply first, difference afterwards.
pub fn product(a: &RegularSeries, b: &RegularSeries) -> Result<RegularSeries> {
    let (timestamps, x, y) = intersect(a, b)?;
    let start = timestamps[0];
    let values = x.iter().zip(&y).map(|(u, v)| Some(u * v)).collect();
    Ok(RegularSeries {
        start,
        interval: a.interval,
        values,
        name: format!("{}_x_{}", a.name, b.name),
        gap_policy: a.gap_policy,
    })
}

fn intersect(a: &RegularSeries, b: &RegularSeries) -> Result<(Vec<i64>, Vec<f64>, Vec<f64>)> {
    if a.interval != b.interval {
        return Err(Error::InvalidInput(format!(
            "intervals differ: {} vs {}",
            a.interval, b.interval
        )));
    }
    if (a.start - b.start) % a.interval != 0 {
        return Err(Error::InvalidInput("grids are not phase-aligned".into()));
    }
    let lo = a.start.max(b.start);
    let hi = (a.timestamp(a.len() - 1)).min(b.timestamp(b.len() - 1));
    let mut timestamps = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut t = lo;
    while t <= hi {
        let ia = ((t - a.start) / a.interval) as usize;
        let ib = ((t - b.start) / b.interval) as usize;
        if let (Some(x), Some(y)) = (a.values[ia], b.values[ib]) {
            timestamps.push(t);
            xs.push(x);
            ys.push(y);
        }
        t += a.interval;
    }
    if timestamps.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok((timestamps, xs, ys))
}

/// An aligned pair plus the grid timestamps of the retained slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub timestamps: Vec<i64>,
    pub pair: SeriesPair,
}

/// Intersect the time ranges of two regular series on the same grid and
/// drop slots that either side left empty.
pub fn align(a: &RegularSeries, b: &RegularSeries) -> Result<AlignedPair> {
    let (timestamps, xs, ys) = intersect(a, b)?;
    let pair = SeriesPair::new(xs, ys)?.with_labels(a.name.clone(), b.name.clone());
    Ok(AlignedPair { timestamps, pair })
}

/// Write a pair as CSV `timestamp_ms,x,y`.
pub fn write_pair_csv<W: std::io::Write>(w: &mut W, aligned: &AlignedPair) -> Result<()> {
    writeln!(w, "timestamp_ms,x,y")?;
    for (i, ts) in aligned.timestamps.iter().enumerate() {
        writeln!(
            w,
            "{ts},{},{}",
            fmt_f64(aligned.pair.x[i]),
            fmt_f64(aligned.pair.y[i])
        )?;
    }
    Ok(())
}

/// Write a regular series as CSV `timestamp_ms,price`, skipping empty slots.
pub fn write_regular_csv<W: std::io::Write>(w: &mut W, series: &RegularSeries) -> Result<()> {
    writeln!(w, "timestamp_ms,price")?;
    for (slot, v) in series.values.iter().enumerate() {
        if let Some(v) = v {
            writeln!(w, "{},{}", series.timestamp(slot), fmt_f64(*v))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ticks(ts: &[i64], px: &[f64]) -> TickSeries {
        TickSeries::new(ts.to_vec(), px.to_vec(), "t").unwrap()
    }

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_well_formed() {
        let f = write_temp("timestamp_ms,price\n10,1.5\n20,1.6\n30,1.7\n");
        let t = load_csv(f.path()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.prices, vec![1.5, 1.6, 1.7]);
    }

    #[test]
    fn load_without_header() {
        let f = write_temp("10,1.5\n20,1.6\n");
        assert_eq!(load_csv(f.path()).unwrap().len(), 2);
    }

    #[test]
    fn load_bad_price_names_line() {
        let f = write_temp("10,1.5\n20,abc\n");
        match load_csv(f.path()) {
            Err(Error::ParseError { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn load_duplicate_timestamp_is_order_error() {
        let f = write_temp("10,1.5\n10,1.6\n");
        assert!(matches!(load_csv(f.path()), Err(Error::OrderError { line: 2 })));
    }

    #[test]
    fn granulate_definition() {
        // ticks at 10, 50, 130 with interval 60:
        // [0,60) -> price at t=50, [60,120) -> gap, [120,180) -> price at 130
        let t = ticks(&[10, 50, 130], &[1.0, 2.0, 3.0]);
        let g = granulate(&t, 60, GapPolicy::Drop).unwrap();
        assert_eq!(g.start, 0);
        assert_eq!(g.values, vec![Some(2.0), None, Some(3.0)]);

        let g = granulate(&t, 60, GapPolicy::CarryForward).unwrap();
        assert_eq!(g.values, vec![Some(2.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn granulate_one_tick_per_window_is_identity() {
        let t = ticks(&[0, 60, 120], &[1.0, 2.0, 3.0]);
        let g = granulate(&t, 60, GapPolicy::Drop).unwrap();
        assert_eq!(g.values, vec![Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn granulate_idempotent_on_regular_input() {
        let t = ticks(&[0, 60, 120, 180], &[1.0, 2.0, 3.0, 4.0]);
        let once = granulate(&t, 60, GapPolicy::CarryForward).unwrap();
        let as_ticks = TickSeries::new(
            (0..once.len()).map(|i| once.timestamp(i)).collect(),
            once.values.iter().map(|v| v.unwrap()).collect(),
            "t",
        )
        .unwrap();
        let twice = granulate(&as_ticks, 60, GapPolicy::CarryForward).unwrap();
        assert_eq!(once.values, twice.values);
    }

    #[test]
    fn difference_basic() {
        let s = RegularSeries {
            start: 0,
            interval: 10,
            values: vec![Some(1.0), Some(3.0), Some(6.0)],
            name: "s".into(),
            gap_policy: GapPolicy::CarryForward,
        };
        let d = difference(&s).unwrap();
        assert_eq!(d.values, vec![Some(2.0), Some(3.0)]);
        assert_eq!(d.start, 10);
    }

    #[test]
    fn difference_constant_is_zero() {
        let s = RegularSeries {
            start: 0,
            interval: 1,
            values: vec![Some(5.0); 6],
            name: "s".into(),
            gap_policy: GapPolicy::CarryForward,
        };
        let d = difference(&s).unwrap();
        assert!(d.values.iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn difference_cumsum_inverse() {
        let vals = [1.0, 4.0, 2.0, 7.0, 3.5];
        let s = RegularSeries {
            start: 0,
            interval: 1,
            values: vals.iter().map(|&v| Some(v)).collect(),
            name: "s".into(),
            gap_policy: GapPolicy::CarryForward,
        };
        let d = difference(&s).unwrap();
        let mut acc = vals[0];
        for (i, v) in d.values.iter().enumerate() {
            acc += v.unwrap();
            assert!((acc - vals[i + 1]).abs() < 1e-15);
        }
    }

    #[test]
    fn difference_too_short() {
        let s = RegularSeries {
            start: 0,
            interval: 1,
            values: vec![Some(1.0)],
            name: "s".into(),
            gap_policy: GapPolicy::CarryForward,
        };
        assert!(matches!(difference(&s), Err(Error::TooShort { .. })));
    }

    fn regular(start: i64, vals: &[Option<f64>]) -> RegularSeries {
        RegularSeries {
            start,
            interval: 10,
            values: vals.to_vec(),
            name: "r".into(),
            gap_policy: GapPolicy::Drop,
        }
    }

    #[test]
    fn align_identical_grids() {
        let a = regular(0, &[Some(1.0), Some(2.0), Some(3.0)]);
        let b = regular(0, &[Some(4.0), Some(5.0), Some(6.0)]);
        let out = align(&a, &b).unwrap();
        assert_eq!(out.pair.len(), 3);
        assert_eq!(out.timestamps, vec![0, 10, 20]);
    }

    #[test]
    fn align_disjoint_ranges() {
        let a = regular(0, &[Some(1.0), Some(2.0)]);
        let b = regular(1000, &[Some(3.0), Some(4.0)]);
        assert!(matches!(align(&a, &b), Err(Error::NoOverlap)));
    }

    #[test]
    fn align_one_slot_overlap() {
        let a = regular(0, &[Some(1.0), Some(2.0)]);
        let b = regular(10, &[Some(3.0), Some(4.0)]);
        let out = align(&a, &b).unwrap();
        assert_eq!(out.pair.len(), 1);
        assert_eq!(out.pair.x, vec![2.0]);
        assert_eq!(out.pair.y, vec![3.0]);
    }

    #[test]
    fn align_drops_gaps_on_either_side() {
        let a = regular(0, &[Some(1.0), None, Some(3.0), Some(4.0)]);
        let b = regular(0, &[Some(5.0), Some(6.0), Some(7.0), None]);
        let out = align(&a, &b).unwrap();
        assert_eq!(out.timestamps, vec![0, 20]);
        assert_eq!(out.pair.x, vec![1.0, 3.0]);
        assert_eq!(out.pair.y, vec![5.0, 7.0]);
    }

    #[test]
    fn product_multiplies_pointwise() {
        let a = regular(0, &[Some(2.0), Some(3.0)]);
        let b = regular(0, &[Some(5.0), Some(7.0)]);
        let p = product(&a, &b).unwrap();
        assert_eq!(p.values, vec![Some(10.0), Some(21.0)]);
    }

    #[test]
    fn pipeline_deterministic() {
        let f = write_temp("0,1.0\n70,2.0\n125,4.0\n190,8.0\n");
        let run = || {
            let t = load_csv(f.path()).unwrap();
            let g = granulate(&t, 60, GapPolicy::CarryForward).unwrap();
            let d = difference(&g).unwrap();
            let out = align(&d, &d).unwrap();
            let mut buf = Vec::new();
            write_pair_csv(&mut buf, &out).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }
}
