//! Raw multi-sample data and the pooled empirical measure.
//!
//! Population 0 is the base of the density ratio model. In long-layout CSV
//! files the populations are indexed by first appearance of their group label.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DrmError, Result};

/// `m + 1` independent real-valued samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSample {
    samples: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl MultiSample {
    /// Validates that there are at least two populations, each with at least
    /// two finite observations.
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..samples.len()).map(|k| k.to_string()).collect();
        Self::with_labels(samples, labels)
    }

    pub fn with_labels(samples: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        const OP: &str = "multisample::new";
        if samples.len() < 2 {
            return Err(DrmError::degenerate(
                OP,
                format!("need at least 2 populations, got {}", samples.len()),
            ));
        }
        if labels.len() != samples.len() {
            return Err(DrmError::usage(OP, "one label per population required"));
        }
        for (k, s) in samples.iter().enumerate() {
            if s.len() < 2 {
                return Err(DrmError::degenerate(
                    OP,
                    format!("population {k} ({}) has {} observation(s); need at least 2", labels[k], s.len()),
                ));
            }
            if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
                return Err(DrmError::domain(OP, format!("population {k} contains non-finite value {bad}")));
            }
        }
        Ok(Self { samples, labels })
    }

    /// A single-population container. Only the `m = 0` reductions of the
    /// estimators accept it; the basis pipeline needs at least two samples.
    pub fn single(sample: Vec<f64>) -> Result<Self> {
        const OP: &str = "multisample::single";
        if sample.len() < 2 {
            return Err(DrmError::degenerate(OP, "need at least 2 observations"));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(DrmError::domain(OP, "non-finite value"));
        }
        Ok(Self {
            samples: vec![sample],
            labels: vec!["0".into()],
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, layout: Layout) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DrmError::Io {
            op: "multisample::load_csv",
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text, layout)
    }

    /// Parses CSV text. Row numbers in errors count data rows from 1, not
    /// including the header.
    pub fn parse_csv(text: &str, layout: Layout) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| DrmError::Parse { row: 0, msg: e.to_string() })?
            .clone();
        match layout {
            Layout::Long => {
                if headers.len() < 2 {
                    return Err(DrmError::Parse {
                        row: 0,
                        msg: "long layout needs columns `group,value`".into(),
                    });
                }
                let mut index: HashMap<String, usize> = HashMap::new();
                let mut labels = Vec::new();
                let mut samples: Vec<Vec<f64>> = Vec::new();
                for (i, rec) in reader.records().enumerate() {
                    let row = i + 1;
                    let rec = rec.map_err(|e| DrmError::Parse { row, msg: e.to_string() })?;
                    if rec.iter().all(|c| c.is_empty()) {
                        continue;
                    }
                    let group = rec.get(0).unwrap_or("").to_string();
                    let raw = rec.get(1).unwrap_or("");
                    let value = parse_value(raw, row)?;
                    let k = *index.entry(group.clone()).or_insert_with(|| {
                        labels.push(group);
                        samples.push(Vec::new());
                        samples.len() - 1
                    });
                    samples[k].push(value);
                }
                Self::with_labels(samples, labels)
            }
            Layout::Wide => {
                let labels: Vec<String> = headers.iter().map(str::to_string).collect();
                let mut samples = vec![Vec::new(); labels.len()];
                for (i, rec) in reader.records().enumerate() {
                    let row = i + 1;
                    let rec = rec.map_err(|e| DrmError::Parse { row, msg: e.to_string() })?;
                    for (k, cell) in rec.iter().enumerate().take(labels.len()) {
                        if cell.is_empty() {
                            continue;
                        }
                        samples[k].push(parse_value(cell, row)?);
                    }
                }
                Self::with_labels(samples, labels)
            }
        }
    }

    /// Number of populations, `m + 1`.
    pub fn num_populations(&self) -> usize {
        self.samples.len()
    }

    /// `m`, the number of non-base populations.
    pub fn m(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.samples.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    /// Sample fractions `n_k / N`.
    pub fn rho(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.samples.iter().map(|s| s.len() as f64 / n).collect()
    }

    /// Applies `x -> f(x)` to every observation.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_labels(
            self.samples.iter().map(|s| s.iter().map(|&x| f(x)).collect()).collect(),
            self.labels.clone(),
        )
    }

    /// Reorders populations; `order[new] = old`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.samples.len() {
            return Err(DrmError::usage("multisample::permuted", "permutation length mismatch"));
        }
        Self::with_labels(
            order.iter().map(|&k| self.samples[k].clone()).collect(),
            order.iter().map(|&k| self.labels[k].clone()).collect(),
        )
    }

    pub fn pool(&self) -> PooledEmpirical {
        PooledEmpirical::new(self)
    }
}

fn parse_value(raw: &str, row: usize) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| DrmError::Parse {
        row,
        msg: format!("non-numeric value {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(DrmError::Parse {
            row,
            msg: format!("non-finite value {raw:?}"),
        });
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Long,
    Wide,
}

impl FromStr for Layout {
    type Err = DrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(Layout::Long),
            "wide" => Ok(Layout::Wide),
            other => Err(DrmError::usage(
                "multisample::load_csv",
                format!("unknown layout {other:?}; expected long or wide"),
            )),
        }
    }
}

/// The pooled empirical distribution: all `N` observations sorted ascending,
/// each with mass `1/N`. Ties are kept as repeated points.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmpirical {
    points: Vec<f64>,
    origin: Vec<usize>,
    sizes: Vec<usize>,
}

impl PooledEmpirical {
    pub fn new(ms: &MultiSample) -> Self {
        let mut tagged: Vec<(f64, usize)> = ms
            .samples()
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.iter().map(move |&x| (x, k)))
            .collect();
        // Stable sort on value, then on population, so the order is a pure
        // function of the multiset of (value, population) pairs.
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (points, origin) = tagged.into_iter().unzip();
        Self {
            points,
            origin,
            sizes: ms.sizes(),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Population index of each sorted point.
    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.points.len() as f64
    }

    /// `∫ h dF̄_n = N⁻¹ Σ h(x)`.
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().map(|&x| h(x)).sum::<f64>() / self.points.len() as f64
    }

    /// Mean of precomputed values aligned with `points()`.
    pub fn mean_of(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_layout_reads_back() {
        let ms = MultiSample::parse_csv("group,value\n0,1.0\n0,2.0\n1,3.0\n1,4.0\n", Layout::Long).unwrap();
        assert_eq!(ms.num_populations(), 2);
        assert_eq!(ms.sizes(), vec![2, 2]);
        assert_eq!(ms.total(), 4);
        assert_eq!(ms.sample(1), &[3.0, 4.0]);
    }

    #[test]
    fn long_layout_uses_first_appearance_order() {
        let ms = MultiSample::parse_csv("group,value\nb,1\na,2\nb,3\na,4\n", Layout::Long).unwrap();
        assert_eq!(ms.labels(), &["b".to_string(), "a".to_string()]);
        assert_eq!(ms.sample(0), &[1.0, 3.0]);
    }

    #[test]
    fn wide_layout_counts_and_skips_empty_cells() {
        let mut text = String::from("a,b\n");
        for i in 0..500 {
            text.push_str(&format!("{},{}\n", i, i as f64 * 0.5));
        }
        let ms = MultiSample::parse_csv(&text, Layout::Wide).unwrap();
        assert_eq!(ms.sizes(), vec![500, 500]);
        assert_eq!(ms.rho(), vec![0.5, 0.5]);

        let ragged = MultiSample::parse_csv("a,b\n1,2\n3,\n5,6\n,8\n", Layout::Wide).unwrap();
        assert_eq!(ragged.sizes(), vec![3, 3]);
    }

    #[test]
    fn parse_error_names_row() {
        let text = "group,value\n0,1\n0,2\n0,3\n1,4\n1,5\n1,6\n1,abc\n";
        match MultiSample::parse_csv(text, Layout::Long) {
            Err(DrmError::Parse { row, .. }) => assert_eq!(row, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_population_is_degenerate() {
        let err = MultiSample::parse_csv("group,value\n0,1\n0,2\n1,3\n", Layout::Long).unwrap_err();
        assert!(matches!(err, DrmError::DegenerateSample { .. }));
    }

    #[test]
    fn unknown_layout_is_usage_error() {
        let err = "tall".parse::<Layout>().unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Usage);
    }

    #[test]
    fn pool_sorts_and_integrates() {
        let ms = MultiSample::new(vec![vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap();
        let pooled = ms.pool();
        assert_eq!(pooled.points(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pooled.origin(), &[0, 1, 0, 1]);
        assert_eq!(pooled.integrate(|x| x), 2.5);
        assert_eq!(pooled.integrate(|_| 1.0), 1.0);
    }

    #[test]
    fn pool_keeps_ties() {
        let ms = MultiSample::new(vec![vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(ms.pool().points(), &[1.0, 1.0, 1.0, 2.0]);
    }
}
