use std::collections::BTreeSet;

use esgd::evolution::{
    generate_offspring, recombine_mutate, select_next_population, select_parents,
    selection_weights, EvolutionParams,
};
use esgd::rng::{substream, Stream};
use esgd::{Individual, ParamVector, Population};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(mu: usize, lambda: usize, rho: usize, p_anchor: f64, sigma: f64) -> EvolutionParams {
    EvolutionParams {
        mu,
        lambda,
        rho,
        sigma,
        sigma_decay: 1.0,
        p_anchor,
        m: (mu * 3 / 5).max(1),
    }
}

/// Anchor at index 0 with fitness 1.0; member `i` has fitness `1 + i / 10`.
fn population(mu: usize, dim: usize, rng: &mut ChaCha8Rng) -> Population<f64> {
    let members = (0..mu)
        .map(|i| {
            let p = ParamVector::new(
                (0..dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>(),
            );
            let mut ind = Individual::new(i as u64, p).with_fitness(1.0 + i as f64 / 10.0);
            ind.is_anchor = i == 0;
            ind
        })
        .collect();
    Population {
        members,
        generation: 0,
        next_id: mu as u64,
    }
}

#[test]
fn equal_fitness_ranks_by_id() {
    let w = selection_weights(&[(7, 1.0), (2, 1.0), (5, 1.0)]).unwrap();
    assert_eq!(w, vec![1.0 / 6.0, 3.0 / 6.0, 2.0 / 6.0]);
}

#[test]
fn anchor_mates_at_its_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pop = population(10, 2, &mut rng);
    let ep = params(10, 1, 3, 0.25, 0.0);
    let n = 10_000;
    let hits = (0..n)
        .filter(|_| select_parents(&pop, &ep, &mut rng).unwrap().contains(&0))
        .count();
    let rate = hits as f64 / n as f64;
    assert!((rate - 0.25).abs() <= 0.02, "anchor mated in {rate}");
}

#[test]
fn single_parent_frequencies_follow_the_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pop = population(6, 1, &mut rng);
    let ep = params(6, 1, 1, 0.0, 0.0);
    let entries: Vec<(u64, f64)> = pop.members[1..]
        .iter()
        .map(|m| (m.id, m.fitness.unwrap()))
        .collect();
    let weights = selection_weights(&entries).unwrap();
    let n = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..n {
        let p = select_parents(&pop, &ep, &mut rng).unwrap();
        assert_eq!(p.len(), 1);
        counts[p[0]] += 1;
    }
    assert_eq!(counts[0], 0);
    for (j, w) in weights.iter().enumerate() {
        let f = counts[j + 1] as f64 / n as f64;
        assert!((f - w).abs() <= 0.02, "member {}: {f} vs {w}", j + 1);
    }
}

#[test]
fn parents_are_distinct() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pop = population(5, 1, &mut rng);
    let ep = params(5, 1, 4, 0.5, 0.0);
    for _ in 0..1000 {
        let p = select_parents(&pop, &ep, &mut rng).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.iter().collect::<BTreeSet<_>>().len(), 4);
    }
}

#[test]
fn mutation_noise_moments_over_coordinates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 10_000;
    let parents: Vec<ParamVector<f64>> = (0..3)
        .map(|_| {
            ParamVector::new(
                (0..d)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>(),
            )
        })
        .collect();
    let refs: Vec<&ParamVector<f64>> = parents.iter().collect();
    let child = recombine_mutate(&refs, 0.001, &mut rng).unwrap();
    let dev: Vec<f64> = (0..d)
        .map(|i| child[i] - (parents[0][i] + parents[1][i] + parents[2][i]) / 3.0)
        .collect();
    let mean = dev.iter().sum::<f64>() / d as f64;
    let std = (dev.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d - 1) as f64).sqrt();
    assert!(mean.abs() < 4.0 * 0.001 / (d as f64).sqrt());
    assert!((std / 0.001 - 1.0).abs() < 0.05, "std {std}");
}

#[test]
fn offspring_count_and_anchor_share() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pop = population(100, 4, &mut rng);
    let ep = params(100, 400, 3, 0.25, 0.001);
    let kids = generate_offspring(&pop, &ep, ep.sigma, |id| {
        substream(5, Stream::Offspring, &[0, 0, id])
    })
    .unwrap();
    assert_eq!(kids.len(), 400);
    let ids: BTreeSet<u64> = kids.iter().map(|k| k.id).collect();
    assert_eq!(ids, (100..500).collect());
    let from_anchor = kids.iter().filter(|k| k.anchor_descended).count() as f64;
    let sd = (400.0f64 * 0.25 * 0.75).sqrt();
    assert!(
        (from_anchor - 100.0).abs() <= 3.0 * sd,
        "{from_anchor} anchor-descended"
    );
}

#[test]
fn forced_anchor_clones() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pop = population(4, 5, &mut rng);
    let ep = params(4, 10, 1, 1.0, 0.0);
    let kids = generate_offspring(&pop, &ep, 0.0, |id| {
        substream(6, Stream::Offspring, &[0, 0, id])
    })
    .unwrap();
    for k in kids {
        assert!(k.anchor_descended);
        assert_eq!(k.params, pop.members[0].params);
    }
}

fn fitness_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => (0u8..8).prop_map(|v| v as f64 * 0.25),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NAN),
    ]
}

proptest! {
    #[test]
    fn selection_invariants(
        mu in 2usize..8,
        lambda in 1usize..10,
        m_frac in 0.0f64..1.0,
        fitness in prop::collection::vec(fitness_strategy(), 18),
        seed in any::<u64>(),
    ) {
        let m = 1 + ((mu - 1) as f64 * m_frac) as usize % (mu - 1);
        let ep = EvolutionParams { m, ..params(mu, lambda, 1, 0.25, 0.0) };
        let mk = |i: usize| Individual::new(i as u64, ParamVector::new(vec![i as f64])).with_fitness(fitness[i]);
        let mut anchor = mk(0);
        anchor.is_anchor = true;
        let parents: Vec<_> = (1..mu).map(mk).collect();
        let offspring: Vec<_> = (mu..mu + lambda).map(mk).collect();
        let pool_best = parents.iter().chain(&offspring).map(|i| i.fitness_key()).fold(f64::INFINITY, f64::min);
        let anchor_key = anchor.fitness_key();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sel = select_next_population(parents, offspring, anchor, &ep, &mut rng).unwrap();

        prop_assert_eq!(sel.members.len(), mu);
        prop_assert_eq!(sel.members.iter().filter(|i| i.is_anchor).count(), 1);
        prop_assert!(sel.members[0].is_anchor);
        let ids: BTreeSet<u64> = sel.members.iter().map(|i| i.id).collect();
        prop_assert_eq!(ids.len(), mu);
        prop_assert_eq!(sel.members[0].fitness_key(), anchor_key.min(pool_best));

        // Elites dominate every pool member left out.
        let left_out: Vec<f64> = (0..mu + lambda)
            .filter(|&i| !ids.contains(&(i as u64)))
            .map(|i| mk(i).fitness_key())
            .collect();
        for e in &sel.members[1..=m] {
            for &o in &left_out {
                prop_assert!(e.fitness_key() <= o);
            }
        }
    }

    #[test]
    fn weights_depend_only_on_rank(values in prop::collection::vec(-100.0f64..100.0, 1..12), shift in -50.0f64..50.0, scale in 0.1f64..10.0) {
        let entries: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
        let moved: Vec<(u64, f64)> = entries.iter().map(|&(i, v)| (i, v * scale + shift)).collect();
        let a = selection_weights(&entries).unwrap();
        let b = selection_weights(&moved).unwrap();
        // An affine map can merge nearly equal values; compare only when the order is strict.
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let moved_sorted: Vec<f64> = sorted.iter().map(|v| v * scale + shift).collect();
        let strict = moved_sorted.windows(2).all(|w| w[0] < w[1]);
        if strict {
            prop_assert_eq!(a, b);
        }
        let total: f64 = selection_weights(&entries).unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
