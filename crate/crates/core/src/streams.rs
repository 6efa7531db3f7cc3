//! Time-series container and the pre-signature path transforms.
//!
//! A [`TimeSeries`] stores `n` strictly increasing sample times and an
//! `n×d` value matrix in **row-major** order: sample `i` occupies
//! `values[i*d .. (i+1)*d]`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries<T>", into = "RawSeries<T>", bound = "T: Real")]
pub struct TimeSeries<T> {
    times: Vec<T>,
    values: Vec<T>,
    dim: usize,
}

impl<T: Real> TimeSeries<T> {
    /// Builds a validated series from times and a row-major value buffer.
    pub fn new(times: Vec<T>, values: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSeries("channel dimension must be ≥ 1".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidSeries("series must contain at least one sample".into()));
        }
        if values.len() != times.len() * dim {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} values for dimension {dim}",
                times.len(),
                values.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite time at index {i}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value at sample {}", i / dim)));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSeries(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { times, values, dim })
    }

    pub fn from_rows(times: Vec<T>, rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
        }
        Self::new(times, rows.concat(), dim)
    }

    /// One-channel series.
    pub fn univariate(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        Self::new(times, values, 1)
    }

    /// One-channel series on the integer grid `0, 1, …, n−1`.
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        let times = (0..values.len()).map(T::from_count).collect();
        Self::new(times, values, 1)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Row-major `n×d` value buffer.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.values.chunks_exact(self.dim)
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = T> + '_ {
        self.values.iter().skip(c).step_by(self.dim).copied()
    }

    /// Adds a constant vector to every sample.
    pub fn translate(&self, shift: &[T]) -> Result<Self> {
        check_dim(self.dim, shift.len())?;
        let values = self
            .rows()
            .flat_map(|r| r.iter().zip(shift).map(|(&a, &b)| a + b))
            .collect();
        Self::new(self.times.clone(), values, self.dim)
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> TimeSeries<U> {
        let conv = |v: &T| U::lit(v.as_f64());
        TimeSeries {
            times: self.times.iter().map(conv).collect(),
            values: self.values.iter().map(conv).collect(),
            dim: self.dim,
        }
    }

    /// Reads the `t,v1,...,vd` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::InvalidSeries("CSV header must be `t,v1,...,vd`".into()));
        }
        for (c, h) in headers.iter().skip(1).enumerate() {
            if h != format!("v{}", c + 1) {
                return Err(Error::InvalidSeries(format!("unexpected CSV column `{h}`")));
            }
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::InvalidSeries(format!("bad number `{s}`: {e}")))
            };
            times.push(parse(&rec[0])?);
            for c in 1..=dim {
                values.push(parse(&rec[c])?);
            }
        }
        Self::new(times, values, dim)
    }

    /// Writes the `t,v1,...,vd` CSV format with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|c| format!("v{c}")));
        wtr.write_record(&header).map_err(csv_err)?;
        for (t, row) in self.times.iter().zip(self.rows()) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(ToString::to_string));
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Serialised form: dimension plus base-64 time and value buffers.
#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct RawSeries<T> {
    dim: usize,
    #[serde(with = "crate::codec::b64")]
    times: Vec<T>,
    #[serde(with = "crate::codec::b64")]
    values: Vec<T>,
}

impl<T: Real> TryFrom<RawSeries<T>> for TimeSeries<T> {
    type Error = Error;

    fn try_from(raw: RawSeries<T>) -> Result<Self> {
        TimeSeries::new(raw.times, raw.values, raw.dim)
    }
}

impl<T: Real> From<TimeSeries<T>> for RawSeries<T> {
    fn from(ts: TimeSeries<T>) -> Self {
        RawSeries { dim: ts.dim, times: ts.times, values: ts.values }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidSeries(format!("CSV: {e}"))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Prepends the sample time as channel 0.
pub fn time_augment<T: Real>(ts: &TimeSeries<T>) -> TimeSeries<T> {
    let d = ts.dim + 1;
    let mut values = Vec::with_capacity(ts.len() * d);
    for (t, row) in ts.times.iter().zip(ts.rows()) {
        values.push(*t);
        values.extend_from_slice(row);
    }
    TimeSeries { times: ts.times.clone(), values, dim: d }
}

/// Prepends a zero sample one median time step before the first sample
/// (one time unit when the series has a single sample).
pub fn basepoint_augment<T: Real>(ts: &TimeSeries<T>) -> TimeSeries<T> {
    let step = if ts.len() < 2 {
        T::one()
    } else {
        let mut steps: Vec<T> = ts.times.windows(2).map(|w| w[1] - w[0]).collect();
        median_in_place(&mut steps)
    };
    let mut times = Vec::with_capacity(ts.len() + 1);
    times.push(ts.times[0] - step);
    times.extend_from_slice(&ts.times);
    let mut values = vec![T::zero(); ts.dim];
    values.extend_from_slice(&ts.values);
    TimeSeries { times, values, dim: ts.dim }
}

/// Lead-lag embedding `((x1,x1),(x1,x2),(x2,x2),…,(xn,xn))`.
///
/// Each output row is `(lag, lead)` with both halves `d` wide, so odd rows
/// read `(x_k, x_{k+1})`. Output times are the integer grid `0..2n−1`.
pub fn lead_lag<T: Real>(ts: &TimeSeries<T>) -> Result<TimeSeries<T>> {
    let n = ts.len();
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let d = ts.dim;
    let mut values = Vec::with_capacity((2 * n - 1) * 2 * d);
    for i in 0..n {
        values.extend_from_slice(ts.row(i));
        values.extend_from_slice(ts.row(i));
        if i + 1 < n {
            values.extend_from_slice(ts.row(i));
            values.extend_from_slice(ts.row(i + 1));
        }
    }
    let times = (0..2 * n - 1).map(T::from_count).collect();
    Ok(TimeSeries { times, values, dim: 2 * d })
}

/// Running per-channel sum.
pub fn cumulative_sum<T: Real>(ts: &TimeSeries<T>) -> TimeSeries<T> {
    let d = ts.dim;
    let mut acc = vec![T::zero(); d];
    let mut values = Vec::with_capacity(ts.values.len());
    for row in ts.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        values.extend_from_slice(&acc);
    }
    TimeSeries { times: ts.times.clone(), values, dim: d }
}

/// Divides channel `c` by `range[c]`.
pub fn range_normalize<T: Real>(ts: &TimeSeries<T>, range: &[T]) -> Result<TimeSeries<T>> {
    check_dim(ts.dim, range.len())?;
    if let Some(r) = range.iter().find(|r| !(**r > T::zero()) || !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("range components must be positive, got {r}")));
    }
    let values = ts
        .rows()
        .flat_map(|row| row.iter().zip(range).map(|(&v, &r)| v / r))
        .collect();
    Ok(TimeSeries { times: ts.times.clone(), values, dim: ts.dim })
}

/// Median Euclidean distance over all sample pairs `i < j`.
pub fn median_pairwise_distance<T: Real>(ts: &TimeSeries<T>) -> Result<T> {
    let n = ts.len();
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(euclidean(ts.row(i), ts.row(j)));
        }
    }
    Ok(median_in_place(&mut dists))
}

pub(crate) fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Median with the even-count convention of averaging the central pair.
/// Panics on an empty slice.
pub fn median_in_place<T: Real>(xs: &mut [T]) -> T {
    let n = xs.len();
    assert!(n > 0, "median of empty set");
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite values");
    let mid = n / 2;
    let (lower, upper, _) = xs.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    }
}

/// One pre-signature transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform<T> {
    CumulativeSum,
    LeadLag,
    TimeAugment,
    BasepointAugment,
    /// Per-channel divisor. An empty vector is a placeholder filled by
    /// [`TransformPipeline::calibrate`].
    RangeNormalize(Vec<T>),
}

/// Ordered list of transforms applied left to right.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformPipeline<T> {
    pub steps: Vec<Transform<T>>,
}

impl<T: Real> TransformPipeline<T> {
    pub fn new(steps: Vec<Transform<T>>) -> Self {
        Self { steps }
    }

    pub fn apply(&self, ts: &TimeSeries<T>) -> Result<TimeSeries<T>> {
        self.apply_steps(&self.steps, ts)
    }

    fn apply_steps(&self, steps: &[Transform<T>], ts: &TimeSeries<T>) -> Result<TimeSeries<T>> {
        let mut cur = ts.clone();
        for step in steps {
            cur = match step {
                Transform::CumulativeSum => cumulative_sum(&cur),
                Transform::LeadLag => lead_lag(&cur)?,
                Transform::TimeAugment => time_augment(&cur),
                Transform::BasepointAugment => basepoint_augment(&cur),
                Transform::RangeNormalize(r) if r.is_empty() => {
                    return Err(Error::InvalidArgument(
                        "range normalisation has not been calibrated".into(),
                    ))
                }
                Transform::RangeNormalize(r) => range_normalize(&cur, r)?,
            };
        }
        Ok(cur)
    }

    /// True when some range normalisation still awaits calibration.
    pub fn needs_calibration(&self) -> bool {
        self.steps
            .iter()
            .any(|s| matches!(s, Transform::RangeNormalize(r) if r.is_empty()))
    }

    /// Fills every uncalibrated range normalisation with the per-channel
    /// range (max − min) of `samples` pushed through the preceding steps.
    /// Channels with zero spread get a range of one.
    pub fn calibrate(&mut self, samples: &[TimeSeries<T>]) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("calibration needs at least one sample".into()));
        }
        for k in 0..self.steps.len() {
            if !matches!(&self.steps[k], Transform::RangeNormalize(r) if r.is_empty()) {
                continue;
            }
            let prefix = &self.steps[..k];
            let mut lo: Vec<T> = Vec::new();
            let mut hi: Vec<T> = Vec::new();
            for s in samples {
                let out = self.apply_steps(prefix, s)?;
                if lo.is_empty() {
                    lo = vec![T::infinity(); out.dim()];
                    hi = vec![T::neg_infinity(); out.dim()];
                }
                check_dim(lo.len(), out.dim())?;
                for row in out.rows() {
                    for c in 0..row.len() {
                        lo[c] = lo[c].min(row[c]);
                        hi[c] = hi[c].max(row[c]);
                    }
                }
            }
            let range = lo
                .iter()
                .zip(&hi)
                .map(|(&l, &h)| if h > l { h - l } else { T::one() })
                .collect();
            self.steps[k] = Transform::RangeNormalize(range);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uni(t: &[f64], v: &[f64]) -> TimeSeries<f64> {
        TimeSeries::univariate(t.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn validation_rejects_bad_input() {
        assert!(TimeSeries::univariate(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::univariate(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::univariate(vec![0.0, 1.0], vec![f64::NAN, 2.0]).is_err());
        assert!(TimeSeries::univariate(vec![0.0, f64::INFINITY], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(TimeSeries::<f64>::univariate(vec![], vec![]).is_err());
    }

    #[test]
    fn time_augment_examples() {
        let out = time_augment(&uni(&[0.0, 1.0], &[5.0, 7.0]));
        assert_eq!(out.values(), &[0.0, 5.0, 1.0, 7.0]);
        let single = TimeSeries::new(vec![0.0], vec![3.0, 4.0], 2).unwrap();
        let out = time_augment(&single);
        assert_eq!(out.values(), &[0.0, 3.0, 4.0]);
        assert_eq!(out.dim(), 3);
    }

    #[test]
    fn basepoint_examples() {
        let out = basepoint_augment(&uni(&[1.0, 2.0], &[4.0, 6.0]));
        assert_eq!(out.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(out.values(), &[0.0, 4.0, 6.0]);
        let out = basepoint_augment(&uni(&[3.0], &[2.0]));
        assert_eq!(out.times(), &[2.0, 3.0]);
        assert_eq!(out.values(), &[0.0, 2.0]);
        let ts = uni(&[0.0, 1.0, 2.0], &[1.0, 2.0, 0.5]);
        let shifted = ts.translate(&[3.0]).unwrap();
        assert_ne!(basepoint_augment(&ts).values(), basepoint_augment(&shifted).values());
    }

    #[test]
    fn lead_lag_examples() {
        let out = lead_lag(&uni(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
        assert_eq!(out.times(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let out = lead_lag(&uni(&[0.0, 1.0], &[1.0, 2.0])).unwrap();
        assert_eq!((out.len(), out.dim()), (3, 2));
        let out = lead_lag(&uni(&[0.0, 1.0, 5.0], &[4.0, 4.0, 4.0])).unwrap();
        assert!(out.values().iter().all(|&v| v == 4.0));
        assert!(matches!(lead_lag(&uni(&[0.0], &[1.0])), Err(Error::TooShort { .. })));
    }

    #[test]
    fn cumulative_sum_examples() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(cumulative_sum(&uni(&t, &[1.0, 0.0, 0.0, 2.0])).values(), &[1.0, 1.0, 1.0, 3.0]);
        assert_eq!(cumulative_sum(&uni(&t, &[0.0; 4])).values(), &[0.0; 4]);
        assert_eq!(cumulative_sum(&uni(&t[..3], &[1.0, -1.0, 1.0])).values(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn range_normalize_examples() {
        let out = range_normalize(&uni(&[0.0, 1.0], &[10.0, 20.0]), &[10.0]).unwrap();
        assert_eq!(out.values(), &[1.0, 2.0]);
        let ts = TimeSeries::new(vec![0.0, 1.0], vec![30.0, 10.0, 50.0, 20.0], 2).unwrap();
        assert_eq!(range_normalize(&ts, &[1.0, 1.0]).unwrap(), ts);
        let out = range_normalize(&ts, &[100.0, 100.0]).unwrap();
        assert_eq!(out.values(), &[0.3, 0.1, 0.5, 0.2]);
        assert!(range_normalize(&ts, &[0.0, 1.0]).is_err());
        assert!(range_normalize(&ts, &[-1.0, 1.0]).is_err());
        assert!(range_normalize(&ts, &[1.0]).is_err());
    }

    #[test]
    fn median_pairwise_examples() {
        let ts = uni(&[0.0, 1.0, 2.0], &[0.0, 1.0, 3.0]);
        assert_eq!(median_pairwise_distance(&ts).unwrap(), 2.0);
        let ts = uni(&[0.0, 1.0, 2.0], &[2.0, 2.0, 2.0]);
        assert_eq!(median_pairwise_distance(&ts).unwrap(), 0.0);
        let ts = TimeSeries::new(vec![0.0, 1.0], vec![0.0, 0.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(median_pairwise_distance(&ts).unwrap(), 5.0);
        // four points → six pairs {1,2,3,1,2,1}: central pair (1,2) → 1.5
        let ts = uni(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(median_pairwise_distance(&ts).unwrap(), 1.5);
        assert!(median_pairwise_distance(&uni(&[0.0], &[1.0])).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let ts = TimeSeries::new(vec![0.0, 0.5], vec![1.25, -3.0, 1e-17, 2.0], 2).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v1,v2\n"));
        assert_eq!(TimeSeries::<f64>::read_csv(&buf[..]).unwrap(), ts);
        assert!(TimeSeries::<f64>::read_csv("x,v1\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn pipeline_order_matters_and_calibrates() {
        let ts = uni(&[0.0, 1.0, 2.0], &[1.0, 2.0, 4.0]);
        let a = TransformPipeline::new(vec![Transform::CumulativeSum, Transform::LeadLag]);
        let b = TransformPipeline::new(vec![Transform::LeadLag, Transform::CumulativeSum]);
        assert_ne!(a.apply(&ts).unwrap(), b.apply(&ts).unwrap());

        let mut p = TransformPipeline::new(vec![
            Transform::TimeAugment,
            Transform::RangeNormalize(vec![]),
            Transform::BasepointAugment,
        ]);
        assert!(p.needs_calibration());
        assert!(p.apply(&ts).is_err());
        p.calibrate(&[ts.clone()]).unwrap();
        assert_eq!(p.steps[1], Transform::RangeNormalize(vec![2.0, 3.0]));
        let out = p.apply(&ts).unwrap();
        assert_eq!(out.len(), 4);
    }

    fn arb_series() -> impl Strategy<Value = TimeSeries<f64>> {
        (1usize..12, 1usize..4).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(0.01f64..2.0, n),
                proptest::collection::vec(-5.0f64..5.0, n * d),
                Just(d),
            )
                .prop_map(|(steps, vals, d)| {
                    let times = steps
                        .iter()
                        .scan(0.0, |acc, s| {
                            *acc += s;
                            Some(*acc)
                        })
                        .collect();
                    TimeSeries::new(times, vals, d).unwrap()
                })
        })
    }

    fn revalidate(ts: &TimeSeries<f64>) -> bool {
        TimeSeries::new(ts.times().to_vec(), ts.values().to_vec(), ts.dim()).is_ok()
    }

    proptest! {
        #[test]
        fn transforms_preserve_validity(ts in arb_series()) {
            prop_assert!(revalidate(&time_augment(&ts)));
            prop_assert!(revalidate(&basepoint_augment(&ts)));
            prop_assert!(revalidate(&cumulative_sum(&ts)));
            if ts.len() >= 2 {
                prop_assert!(revalidate(&lead_lag(&ts).unwrap()));
            }
        }

        #[test]
        fn time_augment_drop_recovers(ts in arb_series()) {
            let aug = time_augment(&ts);
            let dropped: Vec<f64> = aug.rows().flat_map(|r| r[1..].to_vec()).collect();
            prop_assert_eq!(dropped, ts.values().to_vec());
            prop_assert!(aug.channel(0).collect::<Vec<_>>().windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn cumsum_inverts_diff(ts in arb_series()) {
            // Zero-started increments: diff then cumulative sum is the identity.
            let d = ts.dim();
            let mut inc = ts.row(0).to_vec();
            for i in 1..ts.len() {
                inc.extend(ts.row(i).iter().zip(ts.row(i - 1)).map(|(a, b)| a - b));
            }
            let diffed = TimeSeries::new(ts.times().to_vec(), inc, d).unwrap();
            let back = cumulative_sum(&diffed);
            for (a, b) in back.values().iter().zip(ts.values()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn lead_lag_interleaving(ts in arb_series()) {
            prop_assume!(ts.len() >= 2);
            let ll = lead_lag(&ts).unwrap();
            let d = ts.dim();
            for i in (1..ll.len()).step_by(2) {
                // lead half at odd index equals lag half at the next even index
                prop_assert_eq!(&ll.row(i)[d..], &ll.row(i + 1)[..d]);
            }
        }
    }
}
