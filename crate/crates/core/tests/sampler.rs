use std::collections::{BTreeMap, HashMap};

use approx::assert_relative_eq;
use gwve_core::coalescent::spine_split_record;
use gwve_core::env::EnvSummary;
use gwve_core::limits::{bush_laplace, limit_split_marginal_cdf};
use gwve_core::oracle::{enumerate_trees, exact_q_distribution};
use gwve_core::rng::replica_stream;
use gwve_core::sampler::{
    importance_sample_q, sample_gw, sample_gw_surviving, sample_p_spined, split_plan_distribution, tilted_offspring,
    GwSampler, ImportanceSampler, QContext, QTreeSampler, SamplerLimits, SurvivalSampler,
};
use gwve_core::{Environment, Error, Genealogy, Label, OffspringLaw};
use rand::Rng;

fn binary_env() -> Environment {
    Environment::constant(OffspringLaw::explicit(vec![0.5, 0.0, 0.5]).unwrap())
}

fn mixed_env() -> Environment {
    Environment::cyclic(vec![
        OffspringLaw::explicit(vec![0.25, 0.5, 0.25]).unwrap(),
        OffspringLaw::explicit(vec![0.5, 0.25, 0.0, 0.25]).unwrap(),
    ])
    .unwrap()
}

fn tv<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

fn frequencies<K: Ord>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, f64> {
    let mut counts: BTreeMap<K, f64> = BTreeMap::new();
    let mut total = 0.0;
    for k in items {
        *counts.entry(k).or_insert(0.0) += 1.0;
        total += 1.0;
    }
    counts.values_mut().for_each(|v| *v /= total);
    counts
}

#[test]
fn gw_goldens() {
    let mut rng = replica_stream(1, 0);
    assert_eq!(sample_gw(&binary_env(), 0, &mut rng).unwrap(), Genealogy::root_only());
    let gw = GwSampler::new(&binary_env(), 2).unwrap();
    let runs = 400_000;
    let dead = (0..runs).filter(|_| gw.sample(&mut rng).unwrap().population(2) == 0).count() as f64 / runs as f64;
    let sigma = (0.625f64 * 0.375 / runs as f64).sqrt();
    assert!((dead - 0.625).abs() < 4.0 * sigma, "{dead}");

    let poisson = GwSampler::new(&Environment::constant(OffspringLaw::poisson(1.0).unwrap()), 50).unwrap();
    let runs = 100_000;
    let mean = (0..runs).map(|_| poisson.sample(&mut rng).unwrap().population(50) as f64).sum::<f64>() / runs as f64;
    let sigma = (50.0 / runs as f64).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * sigma, "{mean}");
}

#[test]
fn population_cap_is_enforced() {
    let env = Environment::constant(OffspringLaw::explicit(vec![0.0, 0.0, 1.0]).unwrap());
    let gw = GwSampler::new(&env, 20).unwrap().with_limits(SamplerLimits { population_cap: 1000, attempt_cap: 10 });
    assert!(matches!(gw.sample(&mut replica_stream(0, 0)), Err(Error::Resource { .. })));
}

#[test]
fn surviving_goldens() {
    let mut rng = replica_stream(2, 0);
    let (t, attempts) = sample_gw_surviving(&binary_env(), 0, &mut rng, 1).unwrap();
    assert_eq!((t.height(), attempts), (0, 1));
    let gw = GwSampler::new(&binary_env(), 2).unwrap();
    let runs = 200_000;
    let two = (0..runs).filter(|_| gw.sample_surviving(&mut rng, 2).unwrap().0.population(2) == 2).count() as f64 / runs as f64;
    let sigma = (2.0f64 / 9.0 / runs as f64).sqrt();
    assert!((two - 2.0 / 3.0).abs() < 4.0 * sigma, "{two}");
    let hopeless = GwSampler::new(&binary_env(), 2).unwrap().with_limits(SamplerLimits { population_cap: 100, attempt_cap: 5 });
    assert!(matches!(hopeless.sample_surviving(&mut rng, 5), Err(Error::Budget { cap: 5 })));
}

#[test]
fn rejection_cost_tracks_a_over_mu() {
    let env = Environment::constant(OffspringLaw::geometric(0.5).unwrap());
    let n = 500;
    let s = EnvSummary::new(&env, n).unwrap();
    let target = s.a(n) / s.mu(n);
    let gw = GwSampler::new(&env, n).unwrap();
    let mut rng = replica_stream(3, 0);
    let draws = 3000;
    let mean = (0..draws).map(|_| gw.sample_surviving(&mut rng, 1).unwrap().1 as f64).sum::<f64>() / draws as f64;
    assert!((mean / target - 1.0).abs() < 0.1, "{mean} vs {target}");
}

#[test]
fn reduced_sampler_matches_exact_conditioning() {
    for env in [binary_env(), mixed_env()] {
        let n = 3;
        let trees = enumerate_trees::<f64>(&env, n).unwrap();
        // Law of the reduced tree (ancestors of generation-n individuals) given survival.
        let mut exact: BTreeMap<String, f64> = BTreeMap::new();
        let mut mass = 0.0;
        for t in trees.iter().filter(|t| t.z_n > 0) {
            mass += t.probability;
            *exact.entry(reduce(&t.tree).serialize()).or_insert(0.0) += t.probability;
        }
        exact.values_mut().for_each(|v| *v /= mass);
        let sampler = SurvivalSampler::new(&env, n).unwrap();
        assert_relative_eq!(sampler.survival()[0], mass, max_relative = 1e-12);
        let mut rng = replica_stream(4, 0);
        let emp = frequencies((0..300_000).map(|_| sampler.sample(&mut rng).unwrap().serialize()));
        assert!(tv(&emp, &exact) < 0.01, "{}", tv(&emp, &exact));
    }
}

/// Keeps only individuals with descendants at the full height.
fn reduce(t: &Genealogy) -> Genealogy {
    let n = t.height();
    let labels: Vec<Label> = (0..t.population(n)).map(|i| t.label(n, i)).collect();
    let mut keep: std::collections::BTreeSet<Label> = std::collections::BTreeSet::new();
    for l in labels {
        let mut cur = Some(l);
        while let Some(u) = cur {
            cur = u.parent();
            keep.insert(u);
        }
    }
    // Renumber children consecutively per parent, in order.
    let by_gen: Vec<Vec<usize>> = (0..n)
        .map(|m| {
            (0..t.population(m))
                .filter(|&i| keep.contains(&t.label(m, i)))
                .map(|i| t.children(m, i).filter(|&c| keep.contains(&t.label(m + 1, c))).count())
                .collect()
        })
        .collect();
    let counts: Vec<Vec<u32>> = by_gen.into_iter().map(|g| g.into_iter().map(|c| c as u32).collect()).collect();
    Genealogy::from_offspring(&counts).unwrap()
}

#[test]
fn reduced_and_rejection_agree_on_population() {
    let env = Environment::constant(OffspringLaw::poisson(1.0).unwrap());
    let n = 30;
    let reduced = SurvivalSampler::new(&env, n).unwrap();
    let gw = GwSampler::new(&env, n).unwrap();
    let mut rng = replica_stream(5, 0);
    let draws = 40_000;
    let a: Vec<f64> = (0..draws).map(|_| reduced.sample(&mut rng).unwrap().population(n) as f64).collect();
    let b: Vec<f64> = (0..draws).map(|_| gw.sample_surviving(&mut rng, 1).unwrap().0.population(n) as f64).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let se = ((var(&a) + var(&b)) / draws as f64).sqrt();
    assert!((mean(&a) - mean(&b)).abs() < 4.0 * se, "{} vs {}", mean(&a), mean(&b));
    let s = SurvivalSampler::new(&env, n).unwrap();
    assert_relative_eq!(mean(&a), 1.0 / s.survival()[0], max_relative = 4.0 * se);
}

#[test]
fn tilted_goldens() {
    let poisson = Environment::constant(OffspringLaw::poisson(1.0).unwrap());
    let t = tilted_offspring(&poisson, 0, 5, 1, 0.0).unwrap();
    assert_eq!(t.table().offset(), 1);
    for l in 1..12usize {
        let expected = (-1.0f64).exp() / (1..l).map(|i| i as f64).product::<f64>();
        assert_relative_eq!(t.prob(l), expected, max_relative = 1e-10);
    }
    assert_eq!(t.prob(0), 0.0);
    let base = OffspringLaw::binomial(4, 0.25).unwrap();
    let t0 = tilted_offspring(&Environment::constant(base.clone()), 2, 6, 0, 0.0).unwrap();
    for l in 0..=4 {
        assert_relative_eq!(t0.prob(l), base.pmf(l), max_relative = 1e-10);
    }
    let t2 = tilted_offspring(&binary_env(), 0, 3, 2, 0.7).unwrap();
    assert_eq!(t2.prob(2), 1.0);
    assert!(matches!(tilted_offspring(&binary_env(), 0, 3, 3, 0.0), Err(Error::DegenerateTilt { .. })));
}

#[test]
fn tilted_tables_match_direct_formula() {
    let laws = [
        OffspringLaw::poisson(1.3).unwrap(),
        OffspringLaw::binomial(5, 0.2).unwrap(),
        OffspringLaw::geometric(0.45).unwrap(),
        OffspringLaw::linear_fractional(0.3, 0.6).unwrap(),
        OffspringLaw::explicit(vec![0.2, 0.3, 0.3, 0.2]).unwrap(),
    ];
    for law in laws {
        let env = Environment::constant(law.clone());
        for g in 0..=3 {
            for theta in [0.0, 0.4] {
                let n = 4;
                let Ok(t) = tilted_offspring(&env, 1, n, g, theta) else {
                    assert!(law.max_offspring().is_some_and(|m| m < g));
                    continue;
                };
                let y = t.tail_value();
                let norm = law.pgf_derivative(g, y).unwrap();
                let total: f64 = t.table().probs().iter().sum();
                assert!((total - 1.0).abs() < 1e-10);
                assert_eq!(t.table().offset(), g);
                for l in g..g + 15 {
                    let falling = ((l - g + 1)..=l).fold(1.0, |f, i| f * i as f64);
                    let direct = law.pmf(l) * falling * y.powi((l - g) as i32) / norm;
                    assert!((t.prob(l) - direct).abs() < 1e-10, "{law:?} g={g} θ={theta} l={l}");
                }
            }
        }
    }
}

#[test]
fn thinned_laws_match_binomial_mixture() {
    let laws = [
        OffspringLaw::poisson(1.3).unwrap(),
        OffspringLaw::binomial(5, 0.2).unwrap(),
        OffspringLaw::linear_fractional(0.3, 0.6).unwrap(),
        OffspringLaw::explicit(vec![0.2, 0.3, 0.3, 0.2]).unwrap(),
    ];
    for law in laws {
        let r = 0.37;
        let th = law.thinned(r);
        for j in 0..10 {
            let direct: f64 = (j..200).map(|l| law.pmf(l) * gwve_core::law::binomial_pmf(l, r, j)).sum();
            assert!((th.pmf(j) - direct).abs() < 1e-12, "{law:?} j={j}");
        }
        assert_relative_eq!(law.survival_map(r), 1.0 - law.pgf(1.0 - r).unwrap(), max_relative = 1e-12);
    }
}

#[test]
fn split_plan_goldens() {
    let crit = Environment::constant(OffspringLaw::poisson(1.0).unwrap());
    let plans = split_plan_distribution(&crit, 4, 2, 0.0).unwrap();
    let mut psi = [0.0; 4];
    for p in &plans {
        assert_eq!(p.groups, vec![1, 1]);
        psi[p.generation] += p.probability;
    }
    for v in psi {
        assert_relative_eq!(v, 0.25, epsilon = 1e-12);
    }
    let plans = split_plan_distribution(&binary_env(), 2, 2, 0.0).unwrap();
    assert_eq!(plans.len(), 2);
    for p in plans {
        assert_relative_eq!(p.probability, 0.5, epsilon = 1e-12);
    }
    assert!(split_plan_distribution(&crit, 4, 1, 0.0).is_err());
}

#[test]
fn two_spine_law_is_variance_increment() {
    // Q(ψ₁ = m) = (ν_{m+1}/μ_m)/ρ_n at θ = 0.
    let env = Environment::cyclic(vec![
        OffspringLaw::poisson(1.4).unwrap(),
        OffspringLaw::binomial(3, 0.25).unwrap(),
        OffspringLaw::geometric(0.6).unwrap(),
    ])
    .unwrap();
    let n = 25;
    let s = EnvSummary::new(&env, n).unwrap();
    let ctx = QContext::new(&env, n, 2, 0.0).unwrap();
    for m in 0..n {
        let target = s.nu(m + 1) / s.mu(m) / s.rho(n);
        assert_relative_eq!(ctx.psi1_probability(m), target, max_relative = 1e-9);
    }
}

#[test]
fn split_plans_normalize() {
    for (k, theta) in [(2, 0.0), (3, 0.3), (4, 1.0), (5, 0.0)] {
        let env = Environment::cyclic(vec![OffspringLaw::poisson(1.1).unwrap(), OffspringLaw::geometric(0.55).unwrap()]).unwrap();
        let plans = split_plan_distribution(&env, 40, k, theta).unwrap();
        let total: f64 = plans.iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-9, "k={k} θ={theta}: {total}");
        assert!(plans.iter().all(|p| p.groups.iter().sum::<usize>() == k && p.groups.len() >= 2));
    }
}

#[test]
fn q_tree_matches_oracle() {
    for (env, n, k, theta, draws, tol) in [
        (binary_env(), 2, 2, 0.0, 1_000_000, 0.01),
        (binary_env(), 3, 3, 0.5, 400_000, 0.02),
        (mixed_env(), 2, 2, 0.5, 400_000, 0.02),
    ] {
        let exact = exact_q_distribution::<f64>(&env, n, k, theta).unwrap().by_key();
        let sampler = QTreeSampler::new(QContext::new(&env, n, k, theta).unwrap()).unwrap();
        let mut rng = replica_stream(6, 0);
        let emp = frequencies((0..draws).map(|_| {
            let t = sampler.sample(&mut rng).unwrap();
            assert!(t.is_hat());
            t.serialize()
        }));
        let d = tv(&emp, &exact);
        assert!(d < tol, "n={n} k={k} θ={theta}: TV {d}");
    }
}

#[test]
fn importance_sampler_matches_oracle() {
    let (env, n, k, theta) = (binary_env(), 2, 2, 0.0);
    let exact = exact_q_distribution::<f64>(&env, n, k, theta).unwrap().by_key();
    let sampler = ImportanceSampler::new(&env, n, k, theta).unwrap();
    let mut rng = replica_stream(7, 0);
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for _ in 0..1_000_000 {
        let d = sampler.sample(&mut rng).unwrap();
        total += d.weight;
        *weights.entry(d.tree.serialize()).or_insert(0.0) += d.weight;
    }
    weights.values_mut().for_each(|w| *w /= total);
    let d = tv(&weights, &exact);
    assert!(d < 0.01, "TV {d}");
}

#[test]
fn importance_weights_estimate_normalizer() {
    // E_P[w; Z_n ≥ k] = E[e^{−θZ} Z^[k]], with P(Z_n ≥ k) folded in through the attempts.
    let env = mixed_env();
    let (n, k, theta) = (4, 2, 0.3);
    let target = QContext::new(&env, n, k, theta).unwrap().normalizer();
    let mut rng = replica_stream(8, 0);
    let (mut sum, mut attempts) = (0.0, 0u64);
    for _ in 0..200_000 {
        let d = importance_sample_q(&env, n, k, theta, &mut rng).unwrap();
        sum += d.weight;
        attempts += d.attempts;
    }
    let estimate = sum / attempts as f64;
    assert!((estimate / target - 1.0).abs() < 0.02, "{estimate} vs {target}");
}

#[test]
fn psi1_histograms_agree_between_samplers() {
    let (env, n, k, theta) = (binary_env(), 3, 2, 0.0);
    let q = QTreeSampler::new(QContext::new(&env, n, k, theta).unwrap()).unwrap();
    let imp = ImportanceSampler::new(&env, n, k, theta).unwrap();
    let mut rng = replica_stream(9, 0);
    let a = frequencies((0..300_000).map(|_| spine_split_record(&q.sample(&mut rng).unwrap(), &mut rng).unwrap().psi[0]));
    let mut b: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total = 0.0;
    for _ in 0..300_000 {
        let d = imp.sample(&mut rng).unwrap();
        let psi = spine_split_record(&d.tree, &mut rng).unwrap().psi[0];
        *b.entry(psi).or_insert(0.0) += d.weight;
        total += d.weight;
    }
    b.values_mut().for_each(|w| *w /= total);
    assert!(tv(&a, &b) < 0.01, "{a:?} {b:?}");
}

#[test]
fn q_spines_are_uniform_ordered_pairs() {
    let q = exact_q_distribution::<gwve_core::BigRational>(&binary_env(), 2, 2, 0.0).unwrap();
    let mut by_tree: HashMap<String, Vec<gwve_core::BigRational>> = HashMap::new();
    for o in &q.outcomes {
        by_tree.entry(o.tree.serialize()).or_default().push(o.probability.clone());
    }
    for masses in by_tree.values() {
        let z = (1..).find(|z| z * (z - 1) == masses.len()).unwrap();
        assert!(z >= 2);
        assert!(masses.iter().all(|m| m == &masses[0]));
    }
}

#[test]
fn single_spine_offspring_is_size_biased() {
    let env = Environment::constant(OffspringLaw::poisson(1.0).unwrap());
    let sampler = QTreeSampler::new(QContext::new(&env, 6, 1, 0.0).unwrap()).unwrap();
    let mut rng = replica_stream(10, 0);
    let draws = 200_000;
    let mut counts = [0usize; 8];
    for _ in 0..draws {
        let t = sampler.sample(&mut rng).unwrap();
        let leaf = t.tips()[0].index();
        let on_spine = t.tree().ancestor(6, leaf, 2);
        let l = t.tree().offspring(2, on_spine);
        if l < counts.len() {
            counts[l] += 1;
        }
    }
    assert_eq!(counts[0], 0);
    for (l, &c) in counts.iter().enumerate().skip(1) {
        let p = (-1.0f64).exp() / (1..l).map(|i| i as f64).product::<f64>();
        let f = c as f64 / draws as f64;
        assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / draws as f64).sqrt() + 1e-4, "l={l}: {f} vs {p}");
    }
}

#[test]
fn bush_laplace_matches_simulation() {
    let env = binary_env();
    let (n, k, theta, lambda) = (3, 2, 0.2, 0.9);
    let sampler = QTreeSampler::new(QContext::new(&env, n, k, theta).unwrap()).unwrap();
    let mut rng = replica_stream(11, 0);
    // Y for the root when it carries all spines and does not split there: off-spine
    // descendants at n of its unmarked children (binary env: one unmarked child).
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut hits = 0usize;
    for _ in 0..400_000 {
        let t = sampler.sample(&mut rng).unwrap();
        let tree = t.tree();
        let marks = t.mark_counts(1);
        if marks.iter().filter(|&&c| c > 0).count() != 1 {
            continue;
        }
        let y: usize = (0..tree.population(n)).filter(|&i| marks[tree.ancestor(n, i, 1)] == 0).count();
        let v = (-(lambda - theta) * y as f64).exp();
        sum += v;
        sum_sq += v * v;
        hits += 1;
    }
    let mean = sum / hits as f64;
    let se = ((sum_sq / hits as f64 - mean * mean) / hits as f64).sqrt();
    let target = bush_laplace(&env, n, 0, 1, theta, lambda).unwrap();
    assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target} (se {se})");
    assert_relative_eq!(bush_laplace(&env, n, 1, 2, theta, theta).unwrap(), 1.0, epsilon = 1e-15);
    assert!(bush_laplace(&env, n, 0, 1, 0.5, 0.1).is_err());
}

#[test]
fn single_spine_chain_is_spine_laplace() {
    // Under Q with k = 1 and θ, Q[e^{−(λ−θ)Z_n}] = Π_m f'_{m+1}(x_{m+1})/f'_{m+1}(y_{m+1}) · e^{−λ}/e^{−θ}.
    let env = mixed_env();
    let (n, theta, lambda) = (3, 0.1, 0.6);
    let chain: f64 = (0..n).map(|m| bush_laplace(&env, n, m, 1, theta, lambda).unwrap()).product::<f64>()
        * (theta - lambda).exp();
    let q = exact_q_distribution::<f64>(&env, n, 1, theta).unwrap();
    let exact: f64 = q.outcomes.iter().map(|o| o.probability * (-(lambda - theta) * o.z_n as f64).exp()).sum();
    assert_relative_eq!(chain, exact, max_relative = 1e-10);
}

#[test]
fn spine_bushes_are_uncorrelated() {
    let env = Environment::constant(OffspringLaw::poisson(1.0).unwrap());
    let sampler = QTreeSampler::new(QContext::new(&env, 12, 1, 0.0).unwrap()).unwrap();
    let mut rng = replica_stream(12, 0);
    let draws = 100_000;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let t = sampler.sample(&mut rng).unwrap();
        let tree = t.tree();
        let leaf = t.tips()[0].index();
        // Off-spine children of the spine particles at generations 2 and 7.
        let bush = |m: usize| tree.offspring(m, tree.ancestor(12, leaf, m)) as f64 - 1.0;
        let (x, y) = (bush(2), bush(7));
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    let d = draws as f64;
    let cov = sxy / d - sx / d * sy / d;
    let sd = ((sxx / d - (sx / d).powi(2)) * (syy / d - (sy / d).powi(2))).sqrt();
    assert!((cov / sd).abs() < 4.0 / d.sqrt(), "correlation {}", cov / sd);
}

#[test]
fn p_spined_can_hit_the_graveyard() {
    let mut rng = replica_stream(13, 0);
    let mut graveyard = 0;
    for _ in 0..2000 {
        let t = sample_p_spined(&binary_env(), 3, 2, &mut rng).unwrap();
        assert_eq!(t.k(), 2);
        if !t.is_hat() && t.spine_leaves().is_none() {
            graveyard += 1;
        }
    }
    assert!(graveyard > 0);
    let _ = rng.random::<u8>();
}

#[test]
fn split_times_follow_the_marginal_limit() {
    // A uniformly chosen split time, rescaled by ρ, has limit law t/(1 + θ(1 − t)).
    let env = Environment::constant(OffspringLaw::poisson(1.0).unwrap());
    let (n, k, theta, draws) = (2000, 3, 1.0, 100_000);
    let summary = EnvSummary::new(&env, n).unwrap();
    let ctx = QContext::new(&env, n, k, theta / summary.a(n)).unwrap();
    let grid = [0.25, 0.5, 0.75];
    let mut below = [0.0; 3];
    let mut rng = replica_stream(17, 0);
    for _ in 0..draws {
        let skeleton = ctx.sample_skeleton(&mut rng);
        for split in &skeleton.splits {
            let x = summary.rho_ratio(split.generation);
            let weight = (split.groups.len() - 1) as f64 / (k - 1) as f64;
            for (b, &t) in below.iter_mut().zip(&grid) {
                if x <= t {
                    *b += weight;
                }
            }
        }
    }
    for (b, &t) in below.iter().zip(&grid) {
        let empirical = b / draws as f64;
        let target = limit_split_marginal_cdf(theta, t);
        assert!((empirical - target).abs() < 0.01, "t={t}: {empirical} vs {target}");
    }
}
