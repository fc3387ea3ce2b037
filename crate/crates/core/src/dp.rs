//! Layerwise degree allocation under a discretized runtime budget.
//!
//! Minimizes the modeled loss variance `V(d) = Σ_i A_i·E_i(d_i)` subject to
//! `Σ_i tau_i(d_i) <= N_K` over a per-layer degree alphabet. The table is
//! filled row by row: the first row takes the largest affordable degree (the
//! MSE table is non-increasing in the degree, so that is optimal), and each
//! later row extends the optimum of the previous row through
//!
//! `V(l+1, k) = min_d { V(l, k − tau_{l+1}(d)) + A_{l+1}·E_{l+1}(d) }`
//!
//! over the degrees affordable at budget `k`. One run yields the optimal
//! vector for every budget up to `N_K`. A brute-force enumerator over the
//! full degree-vector space serves as the test oracle, and the outer searches
//! (runtime budget, weight-scale ratio) live here as well.

use crate::error::{Error, Result};
use crate::runtime::{DegreeSpace, DiscreteCostTable, SENTINEL_DEGREE};
use crate::sensitivity::MseTable;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One table cell: the degree chosen for the row's layer and the objective
/// value. Full vectors are reconstructed by backtracking, which keeps the
/// table at O(N_L·N_K) memory instead of O(N_L^2·N_K).
#[derive(Debug, Clone, Copy)]
struct Cell {
    last_degree: i32,
    value: f64,
}

/// The filled dynamic-programming table for all budgets `0..=n_budget`.
#[derive(Debug, Clone)]
pub struct DpTable {
    n_layers: usize,
    n_budget: u64,
    cells: Vec<Cell>,
}

impl DpTable {
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_budget(&self) -> u64 {
        self.n_budget
    }

    fn cell(&self, layer: usize, k: u64) -> Cell {
        debug_assert!(layer >= 1 && layer <= self.n_layers);
        self.cells[(layer - 1) * (self.n_budget as usize + 1) + k as usize]
    }

    /// Objective value `V(D(layer, k))`; infinity when `P(layer, k)` has no
    /// all-real-degree solution.
    pub fn value(&self, layer: usize, k: u64) -> f64 {
        self.cell(layer, k).value
    }

    /// The degree the recurrence chose for `layer` in the cell `(layer, k)`.
    pub fn last_degree(&self, layer: usize, k: u64) -> i32 {
        self.cell(layer, k).last_degree
    }

    /// Reconstruct the full degree vector at `(n_layers, k)` by backtracking.
    /// An infeasible cell reports the all-sentinel vector.
    pub fn degrees_at_budget(&self, k: u64, tau: &DiscreteCostTable) -> Result<Vec<i32>> {
        self.degrees_at_cell(self.n_layers, k, tau)
    }

    /// Backtracked degree vector for an arbitrary cell `(layer, k)`.
    pub fn degrees_at_cell(
        &self,
        layer: usize,
        k: u64,
        tau: &DiscreteCostTable,
    ) -> Result<Vec<i32>> {
        if !self.value(layer, k).is_finite() {
            return Ok(vec![SENTINEL_DEGREE; layer]);
        }
        let mut degrees = vec![SENTINEL_DEGREE; layer];
        let mut budget = k;
        for l in (1..=layer).rev() {
            let d = self.cell(l, budget).last_degree;
            degrees[l - 1] = d;
            budget -= u64::from(tau.cost(l - 1, d)?);
        }
        Ok(degrees)
    }

    /// Assemble the reported solution at budget `k`.
    pub fn solution_at(&self, k: u64, tau: &DiscreteCostTable) -> Result<Solution> {
        let degrees = self.degrees_at_budget(k, tau)?;
        let cost = tau.total_cost(&degrees)?;
        Ok(Solution {
            objective: self.value(self.n_layers, k),
            degrees,
            cost,
            budget: k,
            r: 1.0,
        })
    }
}

/// A degree assignment with its modeled objective and discretized cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub degrees: Vec<i32>,
    /// Modeled loss variance `V(d)`; serialized as the string "inf" when no
    /// feasible all-real assignment exists.
    #[serde(with = "serde_objective")]
    pub objective: f64,
    /// `tau(d)`, total discretized cost of the vector.
    pub cost: u64,
    /// The budget `k` the vector was selected under (`cost <= budget`).
    pub budget: u64,
    /// Weight-scale ratio adopted for the final fits.
    pub r: f64,
}

mod serde_objective {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
                Ok(v)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    other => Err(E::custom(format!("unexpected objective '{other}'"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Per-layer `A_i·E_i(d)` terms over the search alphabet, precomputed once.
struct Terms {
    /// alphabet[j] = degree; terms[layer][j] = (cost, contribution).
    alphabet: Vec<i32>,
    per_layer: Vec<Vec<(u32, f64)>>,
}

fn build_terms(
    a: &[f64],
    e_tables: &[MseTable],
    tau: &DiscreteCostTable,
    space: &DegreeSpace,
) -> Result<Terms> {
    let n_layers = a.len();
    if e_tables.len() != n_layers || tau.n_layers() != n_layers {
        return Err(Error::DegreeVectorLength {
            expected: n_layers,
            got: e_tables.len().min(tau.n_layers()),
        });
    }
    let alphabet = space.with_sentinel();
    let mut per_layer = Vec::with_capacity(n_layers);
    for layer in 0..n_layers {
        if !a[layer].is_finite() || a[layer] < 0.0 {
            return Err(Error::NonFinite {
                context: format!("sensitivity weight A for layer {}", layer + 1),
            });
        }
        let mut row = Vec::with_capacity(alphabet.len());
        for &d in &alphabet {
            let cost = tau.cost(layer, d)?;
            // The sentinel contributes +inf unconditionally (a skipped layer
            // is not evaluable), never 0·inf.
            let term = if d == SENTINEL_DEGREE {
                f64::INFINITY
            } else {
                let e = e_tables[layer]
                    .get(&d)
                    .copied()
                    .ok_or(Error::DegreeNotInTable {
                        layer: layer + 1,
                        degree: d,
                    })?;
                if !e.is_finite() || e < 0.0 {
                    return Err(Error::NonFinite {
                        context: format!("MSE table entry for layer {} degree {d}", layer + 1),
                    });
                }
                a[layer] * e
            };
            row.push((cost, term));
        }
        per_layer.push(row);
    }
    Ok(Terms {
        alphabet,
        per_layer,
    })
}

/// Fill the table for every budget `0..=n_budget`.
pub fn solve_dp(
    a: &[f64],
    e_tables: &[MseTable],
    tau: &DiscreteCostTable,
    n_budget: u64,
    space: &DegreeSpace,
) -> Result<DpTable> {
    let terms = build_terms(a, e_tables, tau, space)?;
    let n_layers = a.len();
    let width = n_budget as usize + 1;
    let mut cells = vec![
        Cell {
            last_degree: SENTINEL_DEGREE,
            value: f64::INFINITY,
        };
        n_layers * width
    ];

    // Row 1: the largest affordable degree is optimal because E_1 is
    // non-increasing in the degree. The alphabet is ascending, so the last
    // affordable entry wins.
    for k in 0..width {
        let mut cell = Cell {
            last_degree: SENTINEL_DEGREE,
            value: f64::INFINITY,
        };
        for (j, &d) in terms.alphabet.iter().enumerate() {
            let (cost, term) = terms.per_layer[0][j];
            if u64::from(cost) <= k as u64 {
                cell = Cell {
                    last_degree: d,
                    value: term,
                };
            }
        }
        cells[k] = cell;
    }

    // Rows 2..: argmin over the affordable alphabet; strict comparison keeps
    // the smallest degree on ties (the alphabet is ascending).
    for layer in 2..=n_layers {
        let (prev_rows, cur_row) = cells.split_at_mut((layer - 1) * width);
        let prev = &prev_rows[(layer - 2) * width..];
        let cur = &mut cur_row[..width];
        for (k, slot) in cur.iter_mut().enumerate() {
            let mut best = Cell {
                last_degree: SENTINEL_DEGREE,
                value: f64::INFINITY,
            };
            let mut first = true;
            for (j, &d) in terms.alphabet.iter().enumerate() {
                let (cost, term) = terms.per_layer[layer - 1][j];
                if u64::from(cost) > k as u64 {
                    continue;
                }
                let value = prev[k - cost as usize].value + term;
                if first || value < best.value {
                    best = Cell {
                        last_degree: d,
                        value,
                    };
                    first = false;
                }
            }
            *slot = best;
        }
    }

    Ok(DpTable {
        n_layers,
        n_budget,
        cells,
    })
}

/// Exhaustive minimum of `V` over all feasible degree vectors; the oracle for
/// [`solve_dp`]. Ties break to the lexicographically smallest vector. Guarded
/// to at most 10^6 candidate vectors.
pub fn brute_force(
    a: &[f64],
    e_tables: &[MseTable],
    tau: &DiscreteCostTable,
    n_budget: u64,
    space: &DegreeSpace,
) -> Result<Solution> {
    const GUARD: u128 = 1_000_000;
    let terms = build_terms(a, e_tables, tau, space)?;
    let n_layers = a.len();
    let base = terms.alphabet.len() as u128;
    let total = base
        .checked_pow(n_layers as u32)
        .filter(|t| *t <= GUARD)
        .ok_or(Error::InstanceTooLarge {
            size: base.saturating_pow(n_layers as u32),
            limit: GUARD,
        })?;

    // Candidate index encodes the vector with layer 0 as the most significant
    // digit and digits in ascending alphabet order, so index order is exactly
    // lexicographic order on degree vectors.
    let evaluate = |idx: u64| -> Option<(f64, u64)> {
        let mut rem = idx;
        let mut cost = 0u64;
        let mut value = 0.0f64;
        let mut place = (total as u64) / (base as u64);
        for layer in 0..n_layers {
            let digit = (rem / place) as usize;
            rem %= place;
            place = if layer + 1 < n_layers { place / base as u64 } else { 1 };
            let (c, term) = terms.per_layer[layer][digit];
            cost += u64::from(c);
            if cost > n_budget {
                return None;
            }
            value += term;
        }
        Some((value, idx))
    };

    let best = (0..total as u64)
        .into_par_iter()
        .filter_map(evaluate)
        .min_by(|x, y| {
            x.0.partial_cmp(&y.0)
                .expect("objective is never NaN")
                .then(x.1.cmp(&y.1))
        })
        .expect("the all-sentinel vector is always feasible");

    let mut degrees = Vec::with_capacity(n_layers);
    let mut rem = best.1;
    let mut place = (total as u64) / (base as u64);
    for layer in 0..n_layers {
        let digit = (rem / place) as usize;
        rem %= place;
        place = if layer + 1 < n_layers { place / base as u64 } else { 1 };
        degrees.push(terms.alphabet[digit]);
    }
    let cost = tau.total_cost(&degrees)?;
    Ok(Solution {
        degrees,
        objective: best.0,
        cost,
        budget: n_budget,
        r: 1.0,
    })
}

/// Outcome of the runtime-budget search.
#[derive(Debug, Clone)]
pub struct BudgetSearch {
    pub solution: Solution,
    /// Train accuracy of the selected vector.
    pub accuracy: f64,
    /// Present when the accuracy response was not monotone in the budget and
    /// the search fell back to a downward linear scan.
    pub anomaly: Option<String>,
}

/// Find the smallest budget whose optimal degree vector keeps the evaluated
/// train accuracy within `max_drop_pp` percentage points of `baseline_acc`.
///
/// One DP run provides `D(N_L, k)` for every `k`, so the search only re-runs
/// the (expensive) accuracy evaluation. Binary search assumes accuracy grows
/// with the budget; if the observed responses contradict that, the search
/// falls back to a linear scan downward from the full budget and reports the
/// anomaly.
pub fn search_budget(
    table: &DpTable,
    tau: &DiscreteCostTable,
    mut evaluate: impl FnMut(&[i32]) -> f64,
    baseline_acc: f64,
    max_drop_pp: f64,
) -> Result<BudgetSearch> {
    let bound = baseline_acc - max_drop_pp / 100.0;
    let n_k = table.n_budget();
    let n_layers = table.n_layers();

    // Smallest budget with a finite objective; values are non-increasing in k.
    let k_min = (0..=n_k).find(|&k| table.value(n_layers, k).is_finite());
    let Some(k_min) = k_min else {
        return Err(Error::BoundUnreachable {
            bound,
            best_accuracy: 0.0,
            best_budget: 0,
            best_degrees: vec![SENTINEL_DEGREE; n_layers],
        });
    };

    // Cache evaluations by degree vector: many budgets share one vector.
    let mut memo: std::collections::BTreeMap<Vec<i32>, f64> = std::collections::BTreeMap::new();
    let mut history: Vec<(u64, f64)> = Vec::new();
    let mut eval_at = |k: u64,
                       memo: &mut std::collections::BTreeMap<Vec<i32>, f64>,
                       history: &mut Vec<(u64, f64)>|
     -> Result<f64> {
        let degrees = table.degrees_at_budget(k, tau)?;
        let acc = if let Some(&a) = memo.get(&degrees) {
            a
        } else {
            let a = evaluate(&degrees);
            memo.insert(degrees, a);
            a
        };
        history.push((k, acc));
        Ok(acc)
    };
    let detect_anomaly = |history: &[(u64, f64)]| -> Option<(u64, u64)> {
        for &(k1, a1) in history {
            for &(k2, a2) in history {
                if k1 < k2 && a1 >= bound && a2 < bound {
                    return Some((k1, k2));
                }
            }
        }
        None
    };

    let top_acc = eval_at(n_k, &mut memo, &mut history)?;
    let mut anomaly: Option<String> = None;
    let mut chosen: Option<u64> = None;

    if top_acc >= bound {
        let mut lo = k_min;
        let mut hi = n_k;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let acc = eval_at(mid, &mut memo, &mut history)?;
            if acc >= bound {
                hi = mid;
            } else {
                lo = mid + 1;
            }
            if let Some((k1, k2)) = detect_anomaly(&history) {
                anomaly = Some(format!(
                    "accuracy is not monotone in the budget (passes at k={k1}, fails at k={k2}); \
                     fell back to a linear scan from the full budget"
                ));
                break;
            }
        }
        if anomaly.is_none() {
            chosen = Some(hi);
        }
    }

    if chosen.is_none() {
        // Linear scan downward from N_K: find the highest contiguous passing
        // block and return its smallest budget.
        let mut k = n_k;
        let mut last_pass: Option<u64> = None;
        loop {
            let acc = eval_at(k, &mut memo, &mut history)?;
            if acc >= bound {
                last_pass = Some(k);
            } else if last_pass.is_some() {
                break;
            }
            if k == k_min {
                break;
            }
            k -= 1;
        }
        if anomaly.is_none() && detect_anomaly(&history).is_some() {
            let (k1, k2) = detect_anomaly(&history).expect("checked");
            anomaly = Some(format!(
                "accuracy is not monotone in the budget (passes at k={k1}, fails at k={k2}); \
                 selected the smallest budget of the highest passing block"
            ));
        }
        match last_pass {
            Some(k) => chosen = Some(k),
            None => {
                let (best_budget, best_accuracy) = history
                    .iter()
                    .copied()
                    .max_by(|x, y| x.1.partial_cmp(&y.1).expect("accuracy is never NaN"))
                    .unwrap_or((k_min, 0.0));
                let best_degrees = table.degrees_at_budget(best_budget, tau)?;
                return Err(Error::BoundUnreachable {
                    bound,
                    best_accuracy,
                    best_budget,
                    best_degrees,
                });
            }
        }
    }

    let k_star = chosen.expect("either chosen or returned above");
    let degrees = table.degrees_at_budget(k_star, tau)?;
    let accuracy = memo[&degrees];
    let mut solution = table.solution_at(k_star, tau)?;
    solution.budget = k_star;
    Ok(BudgetSearch {
        solution,
        accuracy,
        anomaly,
    })
}

/// Result of the weight-scale search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedR {
    pub r: f64,
    pub accuracy: f64,
}

/// Pick the scale ratio maximizing the evaluated train accuracy. One `r` is
/// shared by all layers; ties break toward the smaller ratio.
pub fn tune_r(r_grid: &[f64], mut evaluate: impl FnMut(f64) -> f64) -> TunedR {
    assert!(!r_grid.is_empty(), "r grid must be non-empty");
    let mut best = TunedR {
        r: r_grid[0],
        accuracy: evaluate(r_grid[0]),
    };
    for &r in &r_grid[1..] {
        let accuracy = evaluate(r);
        if accuracy > best.accuracy {
            best = TunedR { r, accuracy };
        }
    }
    best
}

/// The default scale-ratio grid, 1.0 to 4.0 in steps of 0.25.
pub fn default_r_grid() -> Vec<f64> {
    (0..=12).map(|i| 1.0 + 0.25 * i as f64).collect()
}
