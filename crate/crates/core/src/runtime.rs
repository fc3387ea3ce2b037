//! Per-layer latency profiles and their discretization into integer costs.
//!
//! A profile tabulates the measured evaluation latency `T_i(d)` of each layer
//! at each candidate degree. Discretization with unit `nu` maps latencies to
//! integers `tau_i(d) = round(T_i(d)/nu)` (half-to-even), which is what the
//! degree-allocation dynamic program consumes. The sentinel degree −1 means
//! "skip this layer entirely" and always costs 0.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

/// Sentinel degree: layer skipped, zero cost, infinite modeled error.
pub const SENTINEL_DEGREE: i32 = -1;

/// The candidate polynomial degrees searched by the optimizer.
///
/// The default space holds the degrees `2^m − 1` from 3 to 255 — the largest
/// degree reachable at multiplicative depth `m`, right before the latency
/// step at `2^m` — plus 88, 154, and 210 to even out the latency intervals
/// between consecutive candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSpace {
    degrees: Vec<i32>,
}

impl DegreeSpace {
    pub const DEFAULT_DEGREES: [i32; 10] = [3, 7, 15, 31, 63, 88, 127, 154, 210, 255];

    /// Strictly increasing positive degrees, each at most the crate-wide cap.
    pub fn new(degrees: Vec<i32>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::InvalidDegreeSpace {
                reason: "degree space is empty".into(),
            });
        }
        for pair in degrees.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidDegreeSpace {
                    reason: format!("degrees must be strictly increasing ({} then {})", pair[0], pair[1]),
                });
            }
        }
        if degrees[0] < 1 {
            return Err(Error::InvalidDegreeSpace {
                reason: format!("degrees must be >= 1, got {}", degrees[0]),
            });
        }
        let max = *degrees.last().expect("nonempty") as usize;
        if max > crate::approx::MAX_DEGREE {
            return Err(Error::DegreeTooLarge {
                degree: max,
                max: crate::approx::MAX_DEGREE,
            });
        }
        Ok(DegreeSpace { degrees })
    }

    pub fn degrees(&self) -> &[i32] {
        &self.degrees
    }

    pub fn max_degree(&self) -> i32 {
        *self.degrees.last().expect("nonempty")
    }

    pub fn contains(&self, degree: i32) -> bool {
        self.degrees.binary_search(&degree).is_ok()
    }

    /// The search alphabet for the optimizer: sentinel first, then the
    /// degrees in ascending order.
    pub fn with_sentinel(&self) -> Vec<i32> {
        let mut out = Vec::with_capacity(self.degrees.len() + 1);
        out.push(SENTINEL_DEGREE);
        out.extend_from_slice(&self.degrees);
        out
    }
}

impl Default for DegreeSpace {
    fn default() -> Self {
        DegreeSpace {
            degrees: Self::DEFAULT_DEGREES.to_vec(),
        }
    }
}

/// Validated per-layer latency tables, seconds per (layer, degree).
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeProfile {
    per_layer: Vec<BTreeMap<i32, f64>>,
    /// The first layer runs before any bootstrapping, so its latencies hold
    /// only the polynomial-evaluation term.
    pub first_layer_no_bootstrap: bool,
    /// Set when the profile file declares itself synthetic; propagated to all
    /// outputs so generated numbers are never mistaken for measurements.
    pub synthetic: bool,
}

impl RuntimeProfile {
    /// Build from per-layer latency tables, validating coverage of the degree
    /// space, positivity, and monotonicity in the degree.
    pub fn new(per_layer: Vec<BTreeMap<i32, f64>>, space: &DegreeSpace) -> Result<Self> {
        if per_layer.is_empty() {
            return Err(Error::ProfileFormat {
                reason: "profile has no layers".into(),
            });
        }
        for (idx, table) in per_layer.iter().enumerate() {
            let layer = idx + 1;
            for &d in space.degrees() {
                match table.get(&d) {
                    None => return Err(Error::ProfileMissingDegree { layer, degree: d }),
                    Some(t) if !t.is_finite() || *t <= 0.0 => {
                        return Err(Error::ProfileFormat {
                            reason: format!("layer {layer} degree {d}: latency {t} must be positive"),
                        })
                    }
                    Some(_) => {}
                }
            }
            let mut prev: Option<(i32, f64)> = None;
            for (&d, &t) in table {
                if let Some((pd, pt)) = prev {
                    if t < pt {
                        return Err(Error::ProfileNonMonotone {
                            layer,
                            lo_degree: pd,
                            hi_degree: d,
                        });
                    }
                }
                prev = Some((d, t));
            }
        }
        Ok(RuntimeProfile {
            per_layer,
            first_layer_no_bootstrap: true,
            synthetic: false,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.per_layer.len()
    }

    pub fn latency(&self, layer: usize, degree: i32) -> Option<f64> {
        self.per_layer.get(layer).and_then(|t| t.get(&degree)).copied()
    }

    pub fn per_layer(&self) -> &[BTreeMap<i32, f64>] {
        &self.per_layer
    }
}

/// Parse a profile from CSV with header `layer,degree,seconds`, one row per
/// (layer, degree). Lines starting with `#` are comments; the markers
/// `# synthetic: true` and `# first_layer_no_bootstrap: false` set the
/// corresponding flags.
pub fn parse_profile(reader: impl Read, space: &DegreeSpace) -> Result<RuntimeProfile> {
    let mut text = String::new();
    let mut reader = reader;
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::ProfileFormat {
            reason: format!("unreadable profile: {e}"),
        })?;

    let synthetic = text
        .lines()
        .any(|l| l.trim().eq_ignore_ascii_case("# synthetic: true"));
    let no_boot_marker = !text
        .lines()
        .any(|l| l.trim().eq_ignore_ascii_case("# first_layer_no_bootstrap: false"));

    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    {
        let headers = csv_reader.headers()?;
        let expected = ["layer", "degree", "seconds"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::ProfileFormat {
                reason: format!("expected header layer,degree,seconds; got {}", got.join(",")),
            });
        }
    }

    let mut tables: BTreeMap<usize, BTreeMap<i32, f64>> = BTreeMap::new();
    for record in csv_reader.records() {
        let record = record?;
        let parse_field = |i: usize, name: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::ProfileFormat {
                reason: format!("row missing {name} column"),
            })
        };
        let layer: usize = parse_field(0, "layer")?.parse().map_err(|_| Error::ProfileFormat {
            reason: format!("bad layer index '{}'", record.get(0).unwrap_or("")),
        })?;
        let degree: i32 = parse_field(1, "degree")?.parse().map_err(|_| Error::ProfileFormat {
            reason: format!("bad degree '{}'", record.get(1).unwrap_or("")),
        })?;
        let seconds: f64 = parse_field(2, "seconds")?.parse().map_err(|_| Error::ProfileFormat {
            reason: format!("bad seconds '{}'", record.get(2).unwrap_or("")),
        })?;
        if layer == 0 {
            return Err(Error::ProfileFormat {
                reason: "layer indices are 1-based".into(),
            });
        }
        tables.entry(layer).or_default().insert(degree, seconds);
    }
    let n_layers = tables.keys().copied().max().unwrap_or(0);
    if tables.len() != n_layers {
        return Err(Error::ProfileFormat {
            reason: format!(
                "layer indices must be contiguous 1..{n_layers}; got {} distinct layers",
                tables.len()
            ),
        });
    }
    let per_layer: Vec<BTreeMap<i32, f64>> = tables.into_values().collect();
    let mut profile = RuntimeProfile::new(per_layer, space)?;
    profile.synthetic = synthetic;
    profile.first_layer_no_bootstrap = no_boot_marker;
    Ok(profile)
}

/// Load and validate a profile CSV from disk.
pub fn load_profile(path: &Path, space: &DegreeSpace) -> Result<RuntimeProfile> {
    let file = std::fs::File::open(path).map_err(|source| Error::ReadFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_profile(file, space)
}

/// Integer cost tables `tau_i(d)`, in units of the discretization unit `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCostTable {
    pub nu: f64,
    per_layer: Vec<BTreeMap<i32, u32>>,
    pub synthetic: bool,
}

impl DiscreteCostTable {
    /// Assemble a table directly from integer costs, validating the
    /// non-decreasing-in-degree invariant. Mostly useful for synthetic
    /// optimizer instances; real tables come from [`discretize`].
    pub fn from_costs(nu: f64, per_layer: Vec<BTreeMap<i32, u32>>) -> Result<Self> {
        if !nu.is_finite() || nu <= 0.0 {
            return Err(Error::InvalidNu { nu });
        }
        for (idx, table) in per_layer.iter().enumerate() {
            let mut prev: Option<(i32, u32)> = None;
            for (&d, &c) in table {
                if let Some((pd, pc)) = prev {
                    if c < pc {
                        return Err(Error::ProfileNonMonotone {
                            layer: idx + 1,
                            lo_degree: pd,
                            hi_degree: d,
                        });
                    }
                }
                prev = Some((d, c));
            }
        }
        Ok(DiscreteCostTable {
            nu,
            per_layer,
            synthetic: false,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.per_layer.len()
    }

    /// `tau_i(d)`; the sentinel degree costs 0 in every layer.
    pub fn cost(&self, layer: usize, degree: i32) -> Result<u32> {
        if degree == SENTINEL_DEGREE {
            return Ok(0);
        }
        self.per_layer
            .get(layer)
            .and_then(|t| t.get(&degree))
            .copied()
            .ok_or(Error::DegreeNotInTable {
                layer: layer + 1,
                degree,
            })
    }

    /// `tau(d) = Σ_i tau_i(d_i)`: round each layer, then sum.
    pub fn total_cost(&self, degrees: &[i32]) -> Result<u64> {
        if degrees.len() != self.per_layer.len() {
            return Err(Error::DegreeVectorLength {
                expected: self.per_layer.len(),
                got: degrees.len(),
            });
        }
        let mut total = 0u64;
        for (layer, &d) in degrees.iter().enumerate() {
            total += u64::from(self.cost(layer, d)?);
        }
        Ok(total)
    }

    pub fn per_layer(&self) -> &[BTreeMap<i32, u32>] {
        &self.per_layer
    }

    /// Largest possible total cost: every layer at its most expensive degree.
    pub fn max_total_cost(&self) -> u64 {
        self.per_layer
            .iter()
            .map(|t| t.values().copied().max().unwrap_or(0) as u64)
            .sum()
    }
}

/// Discretize latencies: `tau_i(d) = round(T_i(d)/nu)` with ties to even.
pub fn discretize(profile: &RuntimeProfile, nu: f64) -> Result<DiscreteCostTable> {
    if !nu.is_finite() || nu <= 0.0 {
        return Err(Error::InvalidNu { nu });
    }
    let per_layer = profile
        .per_layer()
        .iter()
        .map(|table| {
            table
                .iter()
                .map(|(&d, &t)| (d, (t / nu).round_ties_even() as u32))
                .collect()
        })
        .collect();
    Ok(DiscreteCostTable {
        nu,
        per_layer,
        synthetic: profile.synthetic,
    })
}

/// A synthetic latency profile with the qualitative shape of measured
/// encrypted-inference runtimes: a bootstrapping term that steps up at each
/// multiplicative-depth boundary `ceil(log2(d+1))` and dominates the total,
/// plus a slowly growing evaluation term. The first layer carries no
/// bootstrapping term.
pub fn synthetic_profile(n_layers: usize, space: &DegreeSpace) -> RuntimeProfile {
    let per_layer = (0..n_layers)
        .map(|idx| {
            space
                .degrees()
                .iter()
                .map(|&d| (d, synthetic_latency(idx, d)))
                .collect()
        })
        .collect();
    let mut profile =
        RuntimeProfile::new(per_layer, space).expect("synthetic profile is valid by construction");
    profile.synthetic = true;
    profile
}

/// Seconds for one layer/degree in the synthetic profile.
///
/// Evaluation term: 0.05·sqrt(d). Bootstrapping term (layers >= 2): a step
/// table over the depth ceil(log2(d+1)), rising from 4.0 s at depth 2 by
/// 20% per extra level.
fn synthetic_latency(layer_idx: usize, degree: i32) -> f64 {
    let eval = 0.05 * (degree as f64).sqrt();
    if layer_idx == 0 {
        return eval;
    }
    let depth = (degree as f64 + 1.0).log2().ceil() as i32;
    let boot = 4.0 * 1.2f64.powi(depth - 2);
    boot + eval
}

/// Render a profile as the CSV format accepted by [`parse_profile`],
/// including the synthetic marker when set.
pub fn profile_to_csv(profile: &RuntimeProfile) -> String {
    let mut out = String::new();
    if profile.synthetic {
        out.push_str("# synthetic: true\n");
        out.push_str("# generated profile: eval term 0.05*sqrt(d); bootstrap term (layers >= 2)\n");
        out.push_str("# steps at depth ceil(log2(d+1)) as 4.0 * 1.2^(depth-2) seconds\n");
    }
    if !profile.first_layer_no_bootstrap {
        out.push_str("# first_layer_no_bootstrap: false\n");
    }
    out.push_str("layer,degree,seconds\n");
    for (idx, table) in profile.per_layer().iter().enumerate() {
        for (d, t) in table {
            out.push_str(&format!("{},{},{}\n", idx + 1, d, t));
        }
    }
    out
}
