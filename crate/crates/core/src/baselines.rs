//! Non-learned acquisition strategies: uniform random, one- and two-sided
//! equispaced, the non-adaptive oracle and the adaptive greedy oracle.
//!
//! The oracles look at ground truth and are upper bounds rather than usable
//! strategies. Ties in every argmax go to the lowest column index.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::datagen::DataItem;
use crate::error::{Error, Result};
use crate::estimators::{map_items, AcqState, Environment, EvalSummary, MriEnvironment};
use crate::kspace::{init_center_mask, ColumnMask};
use crate::metrics::SsimWindow;
use crate::recon::Reconstructor;
use crate::seeding::{child_rng, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Random,
    EquiOne,
    EquiTwo,
    NaOracle,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Random => "random",
            Provenance::EquiOne => "equi_one",
            Provenance::EquiTwo => "equi_two",
            Provenance::NaOracle => "na_oracle",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    One,
    Two,
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Side::One),
            "two" => Ok(Side::Two),
            other => Err(Error::invalid(format!("unknown side `{other}`"))),
        }
    }
}

/// A fixed, ordered list of columns acquired after the center block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSchedule {
    pub columns: Vec<usize>,
    pub provenance: Provenance,
}

impl MaskSchedule {
    /// The center mask with every scheduled column added.
    pub fn final_mask(&self, width: usize, initial_budget: usize) -> Result<ColumnMask> {
        let mut mask = init_center_mask(width, initial_budget)?;
        for &c in &self.columns {
            mask = mask.add_column(c)?;
        }
        Ok(mask)
    }
}

fn check_budget(width: usize, initial_budget: usize, horizon: usize) -> Result<ColumnMask> {
    if initial_budget + horizon > width {
        return Err(Error::invalid(format!(
            "cannot acquire {horizon} columns after {initial_budget} of {width}"
        )));
    }
    init_center_mask(width, initial_budget)
}

/// `horizon` distinct unmeasured columns drawn uniformly without replacement.
pub fn random_schedule(
    width: usize,
    initial_budget: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<MaskSchedule> {
    let center = check_budget(width, initial_budget, horizon)?;
    let pool: Vec<usize> = center.unmeasured().collect();
    Ok(MaskSchedule {
        columns: pool.choose_multiple(rng, horizon).copied().collect(),
        provenance: Provenance::Random,
    })
}

/// Every `r`-th unmeasured column, `r = available / horizon`, at positions
/// `floor(k * r)`. One-sided schedules only use columns right of the center.
pub fn equispaced_schedule(
    width: usize,
    initial_budget: usize,
    horizon: usize,
    side: Side,
) -> Result<MaskSchedule> {
    let center = check_budget(width, initial_budget, horizon)?;
    let last_center = center.columns().last().unwrap_or(0);
    let pool: Vec<usize> = match side {
        Side::Two => center.unmeasured().collect(),
        Side::One => center.unmeasured().filter(|&c| c > last_center).collect(),
    };
    if pool.len() < horizon {
        return Err(Error::invalid(format!(
            "only {} columns right of the center for {horizon} acquisitions",
            pool.len()
        )));
    }
    let mut columns = Vec::with_capacity(horizon);
    if horizon > 0 {
        let r = pool.len() as f64 / horizon as f64;
        for k in 0..pool.len() {
            let c = pool[(k as f64 * r).floor() as usize];
            if !columns.contains(&c) {
                columns.push(c);
            }
            if columns.len() == horizon {
                break;
            }
        }
    }
    Ok(MaskSchedule {
        columns,
        provenance: match side {
            Side::One => Provenance::EquiOne,
            Side::Two => Provenance::EquiTwo,
        },
    })
}

fn argmax_lowest(values: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((c, v));
        }
    }
    best.map(|(c, _)| c)
}

/// Score improvement of every unmeasured column from `state`, in ascending
/// column order.
pub fn column_improvements<E: Environment + ?Sized>(
    env: &E,
    state: &AcqState,
) -> Result<Vec<(usize, f64)>> {
    state
        .mask
        .unmeasured()
        .map(|c| env.step(state, c).map(|s| (c, s.score - state.score)))
        .collect()
}

/// The unmeasured column with the largest immediate improvement for this
/// environment.
pub fn adaptive_oracle_step<E: Environment + ?Sized>(env: &E, state: &AcqState) -> Result<usize> {
    argmax_lowest(column_improvements(env, state)?)
        .ok_or(Error::NoActionsAvailable(state.mask.width()))
}

/// Builds one shared schedule by adding, at each step, the column with the
/// largest mean improvement over all environments.
pub fn na_oracle_schedule<E: Environment>(
    envs: &[E],
    initial_budget: usize,
    horizon: usize,
    workers: usize,
) -> Result<MaskSchedule> {
    let first = envs
        .first()
        .ok_or_else(|| Error::invalid("the oracle needs a nonempty dataset"))?;
    let width = first.num_columns();
    check_budget(width, initial_budget, horizon)?;
    let mut states = envs
        .iter()
        .map(|e| e.initial_state(initial_budget))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let indexed: Vec<(&E, &AcqState)> = envs.iter().zip(&states).collect();
        let per_env = map_items(&indexed, workers, |_, (env, state)| column_improvements(*env, state))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let n = envs.len() as f64;
        let candidates = per_env[0].len();
        let means = (0..candidates).map(|k| {
            let col = per_env[0][k].0;
            (col, per_env.iter().map(|v| v[k].1).sum::<f64>() / n)
        });
        let best = argmax_lowest(means).ok_or(Error::NoActionsAvailable(width))?;
        columns.push(best);
        states = envs
            .iter()
            .zip(&states)
            .map(|(e, s)| e.step(s, best))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(MaskSchedule {
        columns,
        provenance: Provenance::NaOracle,
    })
}

/// Follows the adaptive oracle for `horizon` steps and returns the visited
/// columns and the final state.
pub fn adaptive_oracle_trajectory<E: Environment + ?Sized>(
    env: &E,
    initial_budget: usize,
    horizon: usize,
) -> Result<(Vec<usize>, AcqState)> {
    let mut state = env.initial_state(initial_budget)?;
    let mut columns = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let c = adaptive_oracle_step(env, &state)?;
        state = env.step(&state, c)?;
        columns.push(c);
    }
    Ok((columns, state))
}

/// Mean first-step improvement of the adaptive oracle and of the
/// non-adaptive oracle's first column, over all environments.
pub fn first_step_improvements<E: Environment>(envs: &[E], initial_budget: usize) -> Result<(f64, f64)> {
    let na = na_oracle_schedule(envs, initial_budget, 1, 1)?.columns[0];
    let (mut adaptive, mut fixed) = (0.0, 0.0);
    for env in envs {
        let state = env.initial_state(initial_budget)?;
        let gains = column_improvements(env, &state)?;
        let best = adaptive_oracle_step(env, &state)?;
        adaptive += gains.iter().find(|g| g.0 == best).unwrap().1;
        fixed += gains.iter().find(|g| g.0 == na).unwrap().1;
    }
    let n = envs.len() as f64;
    Ok((adaptive / n, fixed / n))
}

fn environments<'a>(
    items: &'a [&'a DataItem],
    recon: &'a Reconstructor,
    window: SsimWindow,
) -> Result<Vec<MriEnvironment<'a>>> {
    if items.is_empty() {
        return Err(Error::invalid("evaluation needs at least one item"));
    }
    items
        .iter()
        .map(|it| MriEnvironment::new(it, recon, window))
        .collect()
}

/// Final score of one fixed schedule on every item.
pub fn evaluate_schedule(
    items: &[&DataItem],
    recon: &Reconstructor,
    window: SsimWindow,
    initial_budget: usize,
    schedule: &MaskSchedule,
) -> Result<EvalSummary> {
    let envs = environments(items, recon, window)?;
    let per = envs
        .iter()
        .map(|env| {
            let mask = schedule.final_mask(env.num_columns(), initial_budget)?;
            Ok((vec![env.observe(mask)?.score], env.initial_state(initial_budget)?.score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_items(&per))
}

/// Final score of `q_eval` independent random schedules per item.
pub fn evaluate_random(
    items: &[&DataItem],
    recon: &Reconstructor,
    window: SsimWindow,
    initial_budget: usize,
    horizon: usize,
    q_eval: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if q_eval == 0 {
        return Err(Error::invalid("need at least one trajectory per item"));
    }
    let envs = environments(items, recon, window)?;
    let per = envs
        .iter()
        .enumerate()
        .map(|(i, env)| {
            let mut rng = child_rng(seed, "random", i as u64);
            let finals = (0..q_eval)
                .map(|_| {
                    let s = random_schedule(env.num_columns(), initial_budget, horizon, &mut rng)?;
                    Ok(env.observe(s.final_mask(env.num_columns(), initial_budget)?)?.score)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((finals, env.initial_state(initial_budget)?.score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_items(&per))
}

/// Final score of the adaptive oracle on every item.
pub fn evaluate_adaptive_oracle(
    items: &[&DataItem],
    recon: &Reconstructor,
    window: SsimWindow,
    initial_budget: usize,
    horizon: usize,
    workers: usize,
) -> Result<EvalSummary> {
    let envs = environments(items, recon, window)?;
    let per = map_items(&envs, workers, |_, env| {
        let initial = env.initial_state(initial_budget)?.score;
        adaptive_oracle_trajectory(env, initial_budget, horizon).map(|(_, s)| (vec![s.score], initial))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_items(&per))
}

/// Non-adaptive oracle schedule computed over `items`.
pub fn na_oracle_for_items(
    items: &[&DataItem],
    recon: &Reconstructor,
    window: SsimWindow,
    initial_budget: usize,
    horizon: usize,
    workers: usize,
) -> Result<MaskSchedule> {
    let envs = environments(items, recon, window)?;
    na_oracle_schedule(&envs, initial_budget, horizon, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_phantoms;
    use crate::kspace::Image;
    use crate::seeding::rng_from_seed;
    use std::collections::HashMap;

    struct TableEnv {
        width: usize,
        scores: HashMap<Vec<usize>, f64>,
    }

    impl Environment for TableEnv {
        fn num_columns(&self) -> usize {
            self.width
        }

        fn observe(&self, mask: ColumnMask) -> Result<AcqState> {
            let cols: Vec<usize> = mask.columns().collect();
            let score = self.scores.get(&cols).copied().unwrap_or(0.0);
            Ok(AcqState {
                mask,
                observation: Image::zeros(8, 8).unwrap(),
                score,
            })
        }
    }

    #[test]
    fn equispaced_examples() {
        let two = equispaced_schedule(16, 4, 4, Side::Two).unwrap();
        assert_eq!(two.columns, vec![0, 3, 10, 13]);
        assert_eq!(two.provenance, Provenance::EquiTwo);
        let one = equispaced_schedule(16, 4, 4, Side::One).unwrap();
        assert_eq!(one.columns, vec![10, 11, 13, 14]);
        let all = equispaced_schedule(16, 4, 12, Side::Two).unwrap();
        assert_eq!(all.columns, vec![0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15]);
        assert!(equispaced_schedule(16, 4, 7, Side::One).is_err());
        assert!(equispaced_schedule(16, 4, 13, Side::Two).is_err());
    }

    #[test]
    fn random_schedules() {
        let s = random_schedule(16, 4, 12, &mut rng_from_seed(1)).unwrap();
        let mut sorted = s.columns.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15]);
        let a = random_schedule(32, 4, 8, &mut rng_from_seed(9)).unwrap();
        let b = random_schedule(32, 4, 8, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert!(random_schedule(8, 4, 5, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn random_inclusion_is_hypergeometric() {
        let (w, l, t, n) = (12, 4, 3, 100_000usize);
        let mut rng = rng_from_seed(3);
        let mut counts = [0usize; 12];
        for _ in 0..n {
            for c in random_schedule(w, l, t, &mut rng).unwrap().columns {
                counts[c] += 1;
            }
        }
        let p = t as f64 / (w - l) as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for (c, &k) in counts.iter().enumerate() {
            if (4..8).contains(&c) {
                assert_eq!(k, 0);
            } else {
                let f = k as f64 / n as f64;
                assert!((f - p).abs() < 3.0 * se, "column {c}: {f} vs {p}");
            }
        }
    }

    fn two_image_envs() -> Vec<TableEnv> {
        // W = 4, L = 2: center {1, 2}; candidates 0 and 3
        let make = |g0: f64, g3: f64| {
            let mut scores = HashMap::new();
            scores.insert(vec![1, 2], 0.5);
            scores.insert(vec![0, 1, 2], 0.5 + g0);
            scores.insert(vec![1, 2, 3], 0.5 + g3);
            TableEnv { width: 4, scores }
        };
        vec![make(0.2, 0.0), make(0.0, 0.1)]
    }

    #[test]
    fn oracle_hand_case() {
        let envs = two_image_envs();
        let na = na_oracle_schedule(&envs, 2, 1, 1).unwrap();
        assert_eq!(na.columns, vec![0]);
        let picks: Vec<usize> = envs
            .iter()
            .map(|e| adaptive_oracle_step(e, &e.initial_state(2).unwrap()).unwrap())
            .collect();
        assert_eq!(picks, vec![0, 3]);
        let (adaptive, fixed) = first_step_improvements(&envs, 2).unwrap();
        assert!((adaptive - 0.15).abs() < 1e-12);
        assert!((fixed - 0.10).abs() < 1e-12);
    }

    #[test]
    fn oracle_ties_go_to_lowest_column() {
        let env = TableEnv {
            width: 8,
            scores: HashMap::new(),
        };
        let state = env.initial_state(2).unwrap();
        assert_eq!(adaptive_oracle_step(&env, &state).unwrap(), 0);
        let na = na_oracle_schedule(&[env], 2, 3, 1).unwrap();
        assert_eq!(na.columns, vec![0, 1, 2]);
    }

    #[test]
    fn full_mask_has_no_oracle_step() {
        let env = TableEnv {
            width: 8,
            scores: HashMap::new(),
        };
        let state = env.initial_state(8).unwrap();
        assert!(matches!(
            adaptive_oracle_step(&env, &state),
            Err(Error::NoActionsAvailable(8))
        ));
    }

    #[test]
    fn single_missing_column_is_found() {
        let ds = generate_phantoms(1, 16, 8).unwrap();
        let item = &ds.items()[0];
        let recon = Reconstructor::ZeroFilled;
        let env = MriEnvironment::new(item, &recon, SsimWindow::Gaussian11).unwrap();
        let mut mask = ColumnMask::full(16);
        let mut sel = mask.selected().to_vec();
        sel[5] = false;
        mask = ColumnMask::from_selected(sel);
        let state = env.observe(mask).unwrap();
        let c = adaptive_oracle_step(&env, &state).unwrap();
        assert_eq!(c, 5);
        assert!((env.step(&state, c).unwrap().score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phantom_oracles() {
        let ds = generate_phantoms(6, 16, 21).unwrap();
        let items: Vec<&DataItem> = ds.items().iter().collect();
        let recon = Reconstructor::ZeroFilled;
        let w = SsimWindow::Gaussian11;
        let envs: Vec<_> = items
            .iter()
            .map(|it| MriEnvironment::new(it, &recon, w).unwrap())
            .collect();

        let (adaptive, fixed) = first_step_improvements(&envs, 4).unwrap();
        assert!(adaptive >= fixed);

        let a = na_oracle_for_items(&items, &recon, w, 4, 4, 1).unwrap();
        let b = na_oracle_for_items(&items, &recon, w, 4, 4, 3).unwrap();
        assert_eq!(a, b);
        let center = init_center_mask(16, 4).unwrap();
        assert!(a.columns.iter().all(|&c| !center.is_selected(c)));

        let single = na_oracle_for_items(&items[..1], &recon, w, 4, 4, 1).unwrap();
        let (path, _) = adaptive_oracle_trajectory(&envs[0], 4, 4).unwrap();
        assert_eq!(single.columns, path);

        let na_eval = evaluate_schedule(&items, &recon, w, 4, &a).unwrap();
        let rnd = evaluate_random(&items, &recon, w, 4, 4, 4, 1).unwrap();
        assert!(na_eval.mean > rnd.mean);
        let ad = evaluate_adaptive_oracle(&items, &recon, w, 4, 4, 1).unwrap();
        assert!(ad.per_item.iter().all(|s| s.is_finite()));
    }
}
