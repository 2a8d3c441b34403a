//! Engine-independent observables: the expansion radius, the melt time,
//! and the time series written to CSV.
//!
//! Sites are 1-based in formulas; density vectors are 0-based arrays with
//! element `k` holding site `k + 1`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Version tag written into every series CSV.
pub const CSV_FORMAT: &str = "hcb-series-v1";

/// Default central-density threshold for [`melt_time`].
pub const DEFAULT_MELT_THRESHOLD: f64 = 0.95;

/// Negative radius arguments down to this are roundoff and clamp to zero.
const RADIUS_SLACK: f64 = 1e-9;

/// Bonds entering the half-system current, as 0-based left sites. In
/// 1-based terms these are the bonds `(i, i+1)` with `i = ⌊L/2⌋+1 .. L-1`.
pub fn half_current_bonds(l: usize) -> Range<usize> {
    (l / 2)..(l - 1)
}

/// `(1/N) Σ_i n_i (i - i0)^2` with 1-based positions.
pub fn second_moment(density: &[f64], n: usize, i0: f64) -> f64 {
    let s: f64 = density
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let x = (k + 1) as f64 - i0;
            d * x * x
        })
        .sum();
    s / n as f64
}

/// Expansion radius: `sqrt(m2(t) - m2(0))` of the normalized second moment
/// about `i0`.
pub fn radius(density: &[f64], n: usize, i0: f64, r0_sq: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Integrity("radius needs N > 0".into()));
    }
    let arg = second_moment(density, n, i0) - r0_sq;
    if arg < -RADIUS_SLACK {
        return Err(Error::Integrity(format!(
            "radius argument {arg:.3e} is negative: density corrupted or wrong initial moment"
        )));
    }
    Ok(arg.max(0.0).sqrt())
}

/// What an engine reports at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub density: Vec<f64>,
    pub half_current: f64,
    /// Largest bond entropy; MPS only.
    pub entropy_max: Option<f64>,
    /// Cumulative discarded weight; zero for exact engines.
    pub discarded_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMeta {
    pub params: ModelParams,
    pub n: usize,
    pub engine: String,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub meta: SeriesMeta,
    pub times: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    pub radius: Vec<f64>,
    pub half_current: Vec<f64>,
    pub entropy_max: Vec<f64>,
    pub total_n: Vec<f64>,
    pub discarded_weight: Vec<f64>,
    r0_sq: Option<f64>,
}

impl ObservableSeries {
    pub fn new(meta: SeriesMeta) -> Self {
        Self {
            meta,
            times: Vec::new(),
            density: Vec::new(),
            radius: Vec::new(),
            half_current: Vec::new(),
            entropy_max: Vec::new(),
            total_n: Vec::new(),
            discarded_weight: Vec::new(),
            r0_sq: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn i0(&self) -> f64 {
        self.meta.params.center()
    }

    /// Initial second moment; set by the first [`record`](Self::record).
    pub fn r0_sq(&self) -> Option<f64> {
        self.r0_sq
    }

    /// Appends one row. The first row must be at `t = 0` and fixes the
    /// reference moment for the radius.
    pub fn record(&mut self, time: f64, snap: Snapshot) -> Result<()> {
        if snap.density.len() != self.meta.params.l {
            return Err(Error::Integrity(format!(
                "snapshot has {} sites, expected {}",
                snap.density.len(),
                self.meta.params.l
            )));
        }
        match self.times.last() {
            None if time != 0.0 => {
                return Err(Error::NonMonotoneTime { time, last: f64::NAN });
            }
            Some(&last) if time <= last => {
                return Err(Error::NonMonotoneTime { time, last });
            }
            _ => {}
        }
        let n = self.meta.n;
        let i0 = self.i0();
        let r0_sq = *self.r0_sq.get_or_insert_with(|| second_moment(&snap.density, n, i0));
        let r = radius(&snap.density, n, i0, r0_sq)?;
        self.times.push(time);
        self.radius.push(r);
        self.total_n.push(snap.density.iter().sum());
        self.half_current.push(snap.half_current);
        self.entropy_max.push(snap.entropy_max.unwrap_or(f64::NAN));
        self.discarded_weight.push(snap.discarded_weight);
        self.density.push(snap.density);
        Ok(())
    }

    /// Largest deviation of the recorded particle number from `N`.
    pub fn max_number_drift(&self) -> f64 {
        let n = self.meta.n as f64;
        self.total_n.iter().map(|x| (x - n).abs()).fold(0.0, f64::max)
    }

    /// Recomputes the radius column from the stored densities.
    pub fn recompute_radius(&self) -> Result<Vec<f64>> {
        let Some(r0) = self.r0_sq else { return Ok(Vec::new()) };
        self.density.iter().map(|d| radius(d, self.meta.n, self.i0(), r0)).collect()
    }

    /// First time at which the density of a site within `margin` sites of
    /// either boundary has moved by more than `level` from its `t = 0` value.
    pub fn wavefront_hit(&self, margin: usize, level: f64) -> Option<f64> {
        let l = self.meta.params.l;
        let m = margin.min(l / 2);
        let d0 = self.density.first()?;
        let edge: Vec<usize> = (0..m).chain(l - m..l).collect();
        self.times.iter().zip(&self.density).find_map(|(&t, d)| {
            edge.iter().any(|&k| (d[k] - d0[k]).abs() > level).then_some(t)
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> std::io::Result<()> {
        writeln!(out, "# format = {CSV_FORMAT}")?;
        for line in header {
            writeln!(out, "# {line}")?;
        }
        let mut cols = String::from("time,radius,half_current,entropy_max,total_n,discarded_weight");
        for k in 1..=self.meta.params.l {
            let _ = write!(cols, ",n_{k}");
        }
        writeln!(out, "{cols}")?;
        for r in 0..self.len() {
            let mut line = format!(
                "{},{},{},{},{},{}",
                self.times[r],
                self.radius[r],
                self.half_current[r],
                self.entropy_max[r],
                self.total_n[r],
                self.discarded_weight[r]
            );
            for d in &self.density[r] {
                let _ = write!(line, ",{d}");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Time, radius and current columns read back from a series CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvColumns {
    pub header: Vec<String>,
    pub times: Vec<f64>,
    pub radius: Vec<f64>,
    pub half_current: Vec<f64>,
}

pub fn read_csv<R: BufRead>(input: R) -> Result<CsvColumns> {
    let mut out = CsvColumns::default();
    let mut seen_columns = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if let Some(h) = line.strip_prefix('#') {
            out.header.push(h.trim().to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_columns {
            if !line.starts_with("time,radius,half_current") {
                return Err(Error::Config(format!("line {}: unexpected column header", lineno + 1)));
            }
            seen_columns = true;
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            fields
                .next()
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("line {}: bad {name} field", lineno + 1)))
        };
        out.times.push(next("time")?);
        out.radius.push(next("radius")?);
        out.half_current.push(next("half_current")?);
    }
    if !out.header.iter().any(|h| h == &format!("format = {CSV_FORMAT}")) {
        return Err(Error::Config(format!("missing `format = {CSV_FORMAT}` header")));
    }
    Ok(out)
}

/// Density at the chain center, averaging sites `⌊i0⌋` and `⌈i0⌉`.
pub fn central_density(density: &[f64], i0: f64) -> f64 {
    let lo = i0.floor() as usize;
    let hi = i0.ceil() as usize;
    0.5 * (density[lo - 1] + density[hi - 1])
}

/// First recorded time at which the central density is below `threshold`.
pub fn melt_time(series: &ObservableSeries, threshold: f64) -> Option<f64> {
    let i0 = series.i0();
    series
        .times
        .iter()
        .zip(&series.density)
        .find(|(_, d)| central_density(d, i0) < threshold)
        .map(|(&t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(l: usize, n: usize) -> SeriesMeta {
        SeriesMeta { params: ModelParams::new(1.0, 0.0, l).unwrap(), n, engine: "test".into(), dt: 0.1 }
    }

    fn snap(density: Vec<f64>) -> Snapshot {
        Snapshot { density, half_current: 0.0, entropy_max: None, discarded_weight: 0.0 }
    }

    #[test]
    fn bond_range_is_right_half() {
        assert_eq!(half_current_bonds(12), 6..11);
        assert_eq!(half_current_bonds(13), 6..12);
    }

    #[test]
    fn radius_zero_at_start() {
        let d = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let r0 = second_moment(&d, 2, 3.5);
        assert_eq!(radius(&d, 2, 3.5, r0).unwrap(), 0.0);
    }

    #[test]
    fn radius_by_hand() {
        // L = 6, i0 = 3.5. Width-2 box on sites 3,4: m2 = (0.25 + 0.25)/2 = 0.25.
        // Spread to width 4 (sites 2..5, 0.5 each): m2 = 0.5 (2.25+0.25+0.25+2.25)/2 = 1.25.
        let before = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let after = vec![0.0, 0.5, 0.5, 0.5, 0.5, 0.0];
        let r0 = second_moment(&before, 2, 3.5);
        assert_eq!(r0, 0.25);
        assert_eq!(radius(&after, 2, 3.5, r0).unwrap(), 1.0);
    }

    #[test]
    fn radius_integrity() {
        let d = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert!(matches!(radius(&d, 2, 3.5, 1.0), Err(Error::Integrity(_))));
        assert_eq!(radius(&d, 2, 3.5, 0.25 + 5e-10).unwrap(), 0.0);
        assert!(radius(&d, 0, 3.5, 0.0).is_err());
    }

    #[test]
    fn record_enforces_time_order() {
        let mut s = ObservableSeries::new(meta(6, 2));
        let d = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert!(s.record(0.5, snap(d.clone())).is_err());
        s.record(0.0, snap(d.clone())).unwrap();
        assert_eq!(s.radius[0], 0.0);
        assert_eq!(s.r0_sq(), Some(0.25));
        s.record(0.5, snap(d.clone())).unwrap();
        s.record(1.0, snap(d.clone())).unwrap();
        assert_eq!(s.len(), 3);
        assert!(matches!(s.record(1.0, snap(d)), Err(Error::NonMonotoneTime { .. })));
        assert!(s.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn melt_time_cases() {
        let mut vac = ObservableSeries::new(meta(6, 1));
        // a vacuum run would need N > 0 for the radius; melt time only reads density
        vac.times.push(0.0);
        vac.density.push(vec![0.0; 6]);
        assert_eq!(melt_time(&vac, 0.5), Some(0.0));

        let mut s = ObservableSeries::new(meta(6, 2));
        s.record(0.0, snap(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0])).unwrap();
        s.record(1.0, snap(vec![0.0, 0.2, 0.8, 0.8, 0.2, 0.0])).unwrap();
        s.record(2.0, snap(vec![0.1, 0.4, 0.5, 0.5, 0.4, 0.1])).unwrap();
        assert_eq!(melt_time(&s, 0.95), Some(1.0));
        assert_eq!(melt_time(&s, 0.5), None);
        assert_eq!(melt_time(&s, 0.6), Some(2.0));
    }

    #[test]
    fn csv_roundtrip_of_fit_columns() {
        let mut s = ObservableSeries::new(meta(4, 2));
        s.record(0.0, snap(vec![0.0, 1.0, 1.0, 0.0])).unwrap();
        s.record(0.5, snap(vec![0.1, 0.9, 0.9, 0.1])).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["engine = exact".to_string()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# format = hcb-series-v1\n# engine = exact\ntime,radius"));
        assert!(text.contains(",n_1,n_2,n_3,n_4\n"));
        let cols = read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(cols.times, s.times);
        assert_eq!(cols.radius, s.radius);
    }
}
