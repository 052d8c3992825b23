//! Offspring generation by mean recombination plus Gaussian mutation,
//! anchor mating, m-elitist survivor selection and anchor exchange.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::population::{rank, rank_members, Individual, Population};
use crate::rng::StreamRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    /// Population size, anchor included.
    pub mu: usize,
    /// Offspring per evolution step.
    pub lambda: usize,
    /// Parents averaged into each offspring.
    pub rho: usize,
    /// Mutation standard deviation at generation 0.
    pub sigma: f64,
    /// Per-generation multiplier on `sigma`; 1 keeps it constant.
    pub sigma_decay: f64,
    /// Probability that the anchor is one of an offspring's parents.
    pub p_anchor: f64,
    /// Number of elitist survivors.
    pub m: usize,
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu < 2 {
            return Err(Error::config(
                "evolution.mu",
                "must be at least 2 (anchor plus one member)",
            ));
        }
        if self.lambda < 1 {
            return Err(Error::config("evolution.lambda", "must be at least 1"));
        }
        if self.rho < 1 || self.rho > self.mu {
            return Err(Error::config(
                "evolution.rho",
                format!("must lie in [1, mu = {}]", self.mu),
            ));
        }
        if self.p_anchor < 1.0 && self.rho > self.mu - 1 {
            return Err(Error::config(
                "evolution.rho",
                format!(
                    "must not exceed mu - 1 = {} unless p_anchor = 1",
                    self.mu - 1
                ),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(
                "evolution.sigma",
                "must be finite and non-negative",
            ));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(Error::config("evolution.sigma_decay", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_anchor) {
            return Err(Error::config("evolution.p_anchor", "must lie in [0, 1]"));
        }
        if self.m < 1 || self.m > self.mu - 1 {
            return Err(Error::config(
                "evolution.m",
                format!("must lie in [1, mu - 1 = {}]", self.mu - 1),
            ));
        }
        Ok(())
    }

    /// Mutation scale for zero-based generation `g`.
    pub fn sigma_at(&self, g: usize) -> f64 {
        self.sigma * self.sigma_decay.powi(g as i32)
    }
}

/// Inverse-rank weights aligned with `entries`: rank `r` (1 = best) of `n`
/// gets `(n - r + 1) / (n (n + 1) / 2)`.
pub fn selection_weights<T: Scalar>(entries: &[(u64, T)]) -> Result<Vec<f64>> {
    let order = rank(entries)?;
    let n = entries.len();
    let total = (n * (n + 1) / 2) as f64;
    let mut weights = vec![0.0; n];
    for (r, id) in order.iter().enumerate() {
        let pos = entries
            .iter()
            .position(|e| e.0 == *id)
            .expect("rank returns input ids");
        weights[pos] = (n - r) as f64 / total;
    }
    Ok(weights)
}

fn draw_weighted<R: Rng + ?Sized>(weights: &[f64], taken: &[bool], rng: &mut R) -> usize {
    let total: f64 = weights
        .iter()
        .zip(taken)
        .filter(|(_, &t)| !t)
        .map(|(w, _)| w)
        .sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, (&w, &t)) in weights.iter().zip(taken).enumerate() {
        if t {
            continue;
        }
        last = Some(i);
        if u < w {
            return i;
        }
        u -= w;
    }
    last.expect("at least one candidate remains")
}

/// Indices into `pop.members` of the `rho` parents of one offspring.
pub fn select_parents<T: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    ep: &EvolutionParams,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let anchor = pop
        .anchor_index()
        .ok_or(Error::Shape("population has no anchor".into()))?;
    let others: Vec<usize> = (0..pop.len()).filter(|&i| i != anchor).collect();
    let entries: Vec<(u64, T)> = others
        .iter()
        .map(|&i| {
            pop.members[i]
                .evaluated_fitness()
                .map(|f| (pop.members[i].id, f))
        })
        .collect::<Result<_>>()?;

    let with_anchor = rng.random_bool(ep.p_anchor);
    let draws = if with_anchor { ep.rho - 1 } else { ep.rho };
    if draws > others.len() {
        return Err(Error::NotEnoughParents {
            requested: draws,
            available: others.len(),
        });
    }
    let mut parents = Vec::with_capacity(ep.rho);
    if with_anchor {
        parents.push(anchor);
    }
    if draws > 0 {
        let weights = selection_weights(&entries)?;
        let mut taken = vec![false; others.len()];
        for _ in 0..draws {
            let j = draw_weighted(&weights, &taken, rng);
            taken[j] = true;
            parents.push(others[j]);
        }
    }
    Ok(parents)
}

/// Coordinate-wise mean of the parents plus i.i.d. `N(0, sigma^2)` noise.
pub fn recombine_mutate<T: Scalar, R: Rng + ?Sized>(
    parents: &[&ParamVector<T>],
    sigma: f64,
    rng: &mut R,
) -> Result<ParamVector<T>> {
    let first = parents.first().ok_or(Error::Empty("parent list"))?;
    let d = first.dim();
    if let Some(p) = parents.iter().find(|p| p.dim() != d) {
        return Err(Error::Dimension {
            expected: d,
            actual: p.dim(),
        });
    }
    let mut out = first.as_slice().to_vec();
    for p in &parents[1..] {
        for (o, &v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    if parents.len() > 1 {
        let n = T::of(parents.len() as f64);
        out.iter_mut().for_each(|o| *o /= n);
    }
    if sigma > 0.0 {
        for o in out.iter_mut() {
            *o += T::of(sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(ParamVector::new(out))
}

/// `lambda` unevaluated offspring with ids `pop.next_id ..`. Each offspring
/// draws from its own generator, `rng_for(id)`.
pub fn generate_offspring<T, F>(
    pop: &Population<T>,
    ep: &EvolutionParams,
    sigma: f64,
    rng_for: F,
) -> Result<Vec<Individual<T>>>
where
    T: Scalar,
    F: Fn(u64) -> StreamRng + Sync,
{
    let anchor = pop
        .anchor_index()
        .ok_or(Error::Shape("population has no anchor".into()))?;
    (0..ep.lambda as u64)
        .into_par_iter()
        .map(|i| {
            let id = pop.next_id + i;
            let mut rng = rng_for(id);
            let parents = select_parents(pop, ep, &mut rng)?;
            let refs: Vec<&ParamVector<T>> =
                parents.iter().map(|&p| &pop.members[p].params).collect();
            let params = recombine_mutate(&refs, sigma, &mut rng)?;
            let mut child = Individual::new(id, params);
            child.anchor_descended = parents.contains(&anchor);
            Ok(child)
        })
        .collect()
}

/// Survivors of one evolution step: anchor first, then the m elitists in
/// rank order, then the random fill.
#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub members: Vec<Individual<T>>,
    pub switched: bool,
    pub previous_anchor_fitness: T,
}

/// m-elitist selection over parents (anchor excluded) and offspring, with
/// the anchor exchanged for the pool's best when that is strictly better.
pub fn select_next_population<T: Scalar, R: Rng + ?Sized>(
    parents_excluding_anchor: Vec<Individual<T>>,
    offspring: Vec<Individual<T>>,
    anchor: Individual<T>,
    ep: &EvolutionParams,
    rng: &mut R,
) -> Result<Selection<T>> {
    if ep.m < 1 || ep.m + 1 > ep.mu {
        return Err(Error::config(
            "evolution.m",
            format!("must lie in [1, mu - 1 = {}]", ep.mu.saturating_sub(1)),
        ));
    }
    let mut pool = parents_excluding_anchor;
    pool.extend(offspring);
    if pool.len() + 1 < ep.mu {
        return Err(Error::Shape(format!(
            "selection pool of {} cannot fill a population of {}",
            pool.len(),
            ep.mu
        )));
    }
    let previous_anchor_fitness = anchor.evaluated_fitness()?;
    let mut anchor = anchor;

    let order = rank_members(&pool)?;
    let best = order[0];
    let switched = pool[best].fitness_key() < anchor.fitness_key();
    if switched {
        std::mem::swap(&mut pool[best], &mut anchor);
        pool[best].is_anchor = false;
        anchor.is_anchor = true;
    }
    let order = if switched {
        rank_members(&pool)?
    } else {
        order
    };

    let fill = ep.mu - ep.m - 1;
    let remainder = &order[ep.m..];
    let picks = index::sample(rng, remainder.len(), fill);
    let mut chosen: Vec<usize> = order[..ep.m].to_vec();
    chosen.extend(picks.iter().map(|i| remainder[i]));

    let mut slots: Vec<Option<Individual<T>>> = pool.into_iter().map(Some).collect();
    let mut members = Vec::with_capacity(ep.mu);
    anchor.is_anchor = true;
    members.push(anchor);
    for i in chosen {
        let mut m = slots[i].take().expect("each pool member chosen once");
        m.is_anchor = false;
        members.push(m);
    }
    Ok(Selection {
        members,
        switched,
        previous_anchor_fitness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn ind(id: u64, f: f64) -> Individual<f64> {
        Individual::new(id, ParamVector::new(vec![id as f64])).with_fitness(f)
    }

    fn anchor(id: u64, f: f64) -> Individual<f64> {
        let mut a = ind(id, f);
        a.is_anchor = true;
        a
    }

    fn params(mu: usize, lambda: usize, m: usize) -> EvolutionParams {
        EvolutionParams {
            mu,
            lambda,
            rho: 1,
            sigma: 0.0,
            sigma_decay: 1.0,
            p_anchor: 0.25,
            m,
        }
    }

    #[test]
    fn inverse_rank_weights() {
        let w = selection_weights(&[(0, 0.1), (1, 0.2), (2, 0.3)]).unwrap();
        let expected = [3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let shifted = selection_weights(&[(0, 5.1), (1, 5.2), (2, 5.3)]).unwrap();
        assert_eq!(w, shifted);
        // equal fitness: ids decide the ranks
        let w = selection_weights(&[(7, 1.0), (3, 1.0)]).unwrap();
        assert_eq!(w, vec![1.0 / 3.0, 2.0 / 3.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(selection_weights::<f64>(&[]).is_err());
    }

    #[test]
    fn recombination_identity_and_average() {
        let mut rng = substream(1, Stream::Offspring, &[]);
        let p = ParamVector::new(vec![0.3, -1.7, 2.0]);
        assert_eq!(recombine_mutate(&[&p], 0.0, &mut rng).unwrap(), p);
        let a = ParamVector::new(vec![0.0, 0.0]);
        let b = ParamVector::new(vec![2.0, 2.0]);
        assert_eq!(
            recombine_mutate(&[&a, &b], 0.0, &mut rng)
                .unwrap()
                .as_slice(),
            &[1.0, 1.0]
        );
        assert!(recombine_mutate::<f64, _>(&[], 0.0, &mut rng).is_err());
        let c = ParamVector::new(vec![1.0]);
        assert!(recombine_mutate(&[&a, &c], 0.0, &mut rng).is_err());
    }

    #[test]
    fn anchor_is_sole_parent_when_forced() {
        let pop = Population {
            members: vec![anchor(0, 0.5), ind(1, 0.1), ind(2, 0.2)],
            generation: 0,
            next_id: 3,
        };
        let mut ep = params(3, 5, 1);
        ep.p_anchor = 1.0;
        let mut rng = substream(2, Stream::Offspring, &[]);
        for _ in 0..100 {
            assert_eq!(select_parents(&pop, &ep, &mut rng).unwrap(), vec![0]);
        }
        let kids = generate_offspring(&pop, &ep, 0.0, |id| substream(2, Stream::Offspring, &[id]))
            .unwrap();
        assert_eq!(kids.len(), 5);
        for (i, k) in kids.iter().enumerate() {
            assert_eq!(k.id, 3 + i as u64);
            assert_eq!(k.params, pop.members[0].params);
            assert!(k.anchor_descended && k.fitness.is_none() && k.config.is_none());
        }
    }

    #[test]
    fn anchor_never_mates_when_probability_zero() {
        let pop = Population {
            members: vec![anchor(0, 0.5), ind(1, 0.1), ind(2, 0.2), ind(3, 0.3)],
            generation: 0,
            next_id: 4,
        };
        let mut ep = params(4, 1, 1);
        ep.p_anchor = 0.0;
        ep.rho = 3;
        let mut rng = substream(3, Stream::Offspring, &[]);
        for _ in 0..500 {
            let mut p = select_parents(&pop, &ep, &mut rng).unwrap();
            p.sort_unstable();
            assert_eq!(p, vec![1, 2, 3]);
        }
        ep.rho = 4;
        assert!(matches!(
            select_parents(&pop, &ep, &mut rng),
            Err(Error::NotEnoughParents {
                requested: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn exchange_when_pool_beats_anchor() {
        let parents = vec![ind(1, 0.6), ind(2, 0.7), ind(3, 0.8)];
        let offspring = vec![ind(4, 0.4), ind(5, 0.9)];
        let mut rng = substream(4, Stream::Select, &[]);
        let sel = select_next_population(
            parents,
            offspring,
            anchor(0, 0.5),
            &params(4, 2, 2),
            &mut rng,
        )
        .unwrap();
        assert!(sel.switched);
        assert_eq!(sel.members.len(), 4);
        assert_eq!(sel.members[0].id, 4);
        assert!(sel.members[0].is_anchor);
        assert_eq!(sel.members[0].fitness, Some(0.4));
        // old anchor (0.5) and the next best (0.6) are the elitists
        assert_eq!(sel.members[1].id, 0);
        assert!(!sel.members[1].is_anchor);
        assert_eq!(sel.members[2].id, 1);
        assert_eq!(sel.members.iter().filter(|m| m.is_anchor).count(), 1);
    }

    #[test]
    fn anchor_kept_when_best() {
        let parents = vec![ind(1, 0.6), ind(2, 0.7), ind(3, 0.8)];
        let offspring = vec![ind(4, 0.4)];
        let mut rng = substream(5, Stream::Select, &[]);
        let sel = select_next_population(
            parents,
            offspring,
            anchor(0, 0.3),
            &params(4, 1, 2),
            &mut rng,
        )
        .unwrap();
        assert!(!sel.switched);
        assert_eq!(sel.members[0].id, 0);
        assert_eq!(sel.members[1].id, 4);
        assert_eq!(sel.members[2].id, 1);
    }

    #[test]
    fn equal_fitness_does_not_switch() {
        let mut rng = substream(6, Stream::Select, &[]);
        let sel = select_next_population(
            vec![ind(1, 0.5)],
            vec![ind(2, 0.5)],
            anchor(0, 0.5),
            &params(2, 1, 1),
            &mut rng,
        )
        .unwrap();
        assert!(!sel.switched);
        assert_eq!(sel.members[0].id, 0);
    }

    #[test]
    fn elitism_bound_is_enforced() {
        let mut rng = substream(7, Stream::Select, &[]);
        let r = select_next_population(
            vec![ind(1, 0.5)],
            vec![ind(2, 0.5)],
            anchor(0, 0.5),
            &params(2, 1, 2),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Config { .. })));
        assert!(params(2, 1, 2).validate().is_err());
        assert!(params(2, 0, 1).validate().is_err());
        assert!(params(2, 1, 1).validate().is_ok());
    }

    #[test]
    fn noise_free_recombination_is_translation_equivariant() {
        let mut rng = substream(8, Stream::Offspring, &[]);
        let a = ParamVector::new(vec![0.5, 1.5]);
        let b = ParamVector::new(vec![-1.0, 4.0]);
        let c = [3.0, -2.0];
        let base = recombine_mutate(&[&a, &b], 0.0, &mut rng).unwrap();
        let shift =
            |p: &ParamVector<f64>| ParamVector::new(p.iter().zip(c).map(|(x, y)| x + y).collect());
        let moved = recombine_mutate(&[&shift(&a), &shift(&b)], 0.0, &mut rng).unwrap();
        for i in 0..2 {
            assert!((moved[i] - (base[i] + c[i])).abs() < 1e-12);
        }
    }
}
