//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 8`.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;

use higl_core::adjacency::{AdjacencyMatrix, AdjacencyNet};
use higl_core::coverage::{fps_from, fps_sample};
use higl_core::envs::{Dynamics, Layout, MazeEnv, MazeSpec};
use higl_core::goal::{l2, project};
use higl_core::nn::{grad_check, MlpSpec};
use higl_core::novelty::{NoveltyQueue, RndPair};
use higl_core::planner::{pseudo_landmark, select_landmark, LandmarkGraph, CURRENT, GOAL};
use higl_core::rng::seeded;
use higl_core::trainer::metrics::to_csv;
use higl_core::trainer::{load_checkpoint, save_checkpoint, MetricsRecord, TrainConfig, Trainer};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Criterion {
    id: u32,
    name: &'static str,
    /// Runtime limit in seconds; `None` for a soft target only.
    limit: Option<f64>,
    target: f64,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "gradient correctness", limit: Some(10.0), target: 10.0, run: gradient_correctness },
    Criterion { id: 2, name: "FPS oracle equivalence", limit: Some(5.0), target: 5.0, run: fps_oracle },
    Criterion { id: 3, name: "planner oracle equivalence", limit: Some(5.0), target: 5.0, run: planner_oracle },
    Criterion { id: 4, name: "adjacency matrix oracle", limit: Some(5.0), target: 5.0, run: adjacency_matrix_oracle },
    Criterion { id: 5, name: "contrastive loss margins", limit: Some(60.0), target: 60.0, run: contrastive_margins },
    Criterion { id: 6, name: "novelty queue invariants", limit: Some(10.0), target: 10.0, run: queue_invariants },
    Criterion { id: 7, name: "RND habituation", limit: Some(10.0), target: 10.0, run: rnd_behavior },
    Criterion { id: 8, name: "pseudo-landmark geometry", limit: Some(2.0), target: 2.0, run: pseudo_landmark_geometry },
    Criterion { id: 9, name: "ablation identity", limit: Some(120.0), target: 120.0, run: ablation_identity },
    Criterion { id: 10, name: "directional learning result", limit: None, target: 45.0 * 60.0, run: directional_learning },
    Criterion { id: 11, name: "determinism and persistence", limit: Some(300.0), target: 300.0, run: determinism_and_persistence },
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&c.id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.run));
        let secs = start.elapsed().as_secs_f64();
        let mut o = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let over = c.limit.is_some_and(|l| secs > l);
        if over {
            o.pass = false;
        }
        let timing = match c.limit {
            Some(l) => format!("{secs:.1}s of {l:.0}s allowed"),
            None => format!("{secs:.1}s, target {:.0}s", c.target),
        };
        println!(
            "criterion {:>2} {}: {} ({}; {timing})",
            c.id,
            c.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// 1 ------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for arch in 0..24u64 {
        let layers = 2 + (arch % 3) as usize;
        let input = rng.random_range(1..6);
        let output = rng.random_range(1..4);
        let hidden: Vec<usize> = (0..layers - 1).map(|_| rng.random_range(2..9)).collect();
        let spec = if arch % 2 == 0 {
            MlpSpec::linear_head(input, &hidden, output).unwrap()
        } else {
            let scale = (0..output).map(|_| rng.random_range(0.5..4.0)).collect();
            MlpSpec::tanh_head(input, &hidden, scale).unwrap()
        };
        assert_eq!(spec.num_layers(), layers);
        worst = worst.max(grad_check(&spec, 1000 + arch, 1e-5).unwrap());
        count += 1;
    }
    outcome(count >= 20 && worst < 1e-4, format!("{count} architectures, max relative error {worst:.2e}"))
}

// 2 ------------------------------------------------------------------------

/// Greedy farthest point selection recomputed from scratch at every step.
fn fps_brute_force(pool: &[Vec<f64>], count: usize, first: usize) -> Vec<usize> {
    let mut chosen = vec![first];
    while chosen.len() < count.min(pool.len()) {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..pool.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen.iter().map(|&j| l2(&pool[i], &pool[j])).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
}

fn fps_oracle() -> Outcome {
    let mut rng = seeded(202);
    let mut mismatches = 0;
    for trial in 0..200u64 {
        let n = rng.random_range(1..=12);
        let count = rng.random_range(1..=4);
        let dim = rng.random_range(1..=3);
        // Coarse coordinates so that distance ties actually occur.
        let pool: Vec<Vec<f64>> =
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(0..4) as f64).collect()).collect();
        let picked = fps_sample(&pool, count, &mut seeded(trial)).unwrap();
        let oracle = fps_brute_force(&pool, count, picked[0]);
        if picked != oracle || fps_from(&pool, count, picked[0]).unwrap() != oracle {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("200 pools, {mismatches} mismatches"))
}

// 3 ------------------------------------------------------------------------

fn dijkstra_heap(n: usize, w: &dyn Fn(usize, usize) -> Option<f64>) -> Vec<f64> {
    #[derive(PartialEq, PartialOrd)]
    struct Key(f64);
    impl Eq for Key {}
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[CURRENT] = 0.0;
    heap.push(Reverse((Key(0.0), CURRENT)));
    while let Some(Reverse((Key(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for v in 0..n {
            if let Some(c) = w(u, v) {
                if d + c < dist[v] {
                    dist[v] = d + c;
                    heap.push(Reverse((Key(d + c), v)));
                }
            }
        }
    }
    dist
}

/// Cost-to-goal by repeated Bellman backups.
fn value_iteration(n: usize, w: &dyn Fn(usize, usize) -> Option<f64>) -> Vec<f64> {
    let mut v = vec![f64::INFINITY; n];
    v[GOAL] = 0.0;
    for _ in 0..n {
        for u in 0..n {
            if u == GOAL {
                continue;
            }
            for x in 0..n {
                if let Some(c) = w(u, x) {
                    v[u] = v[u].min(c + v[x]);
                }
            }
        }
    }
    v
}

fn planner_oracle() -> Outcome {
    let mut rng = seeded(303);
    let mut bad = 0;
    let mut reachable = 0;
    let mut ties = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=15);
        let gamma = rng.random_range(5.0..50.0);
        let density = rng.random_range(0.1..0.9);
        let goals: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let raw: Vec<Option<f64>> =
            (0..n * n).map(|_| rng.random_bool(density).then(|| rng.random_range(0.0..50.0))).collect();
        let g = LandmarkGraph::from_costs(goals, &raw, gamma).unwrap();
        // The oracle applies the pruning rules itself from the raw costs.
        let w = |u: usize, v: usize| -> Option<f64> {
            if u == v || u == GOAL {
                return None;
            }
            raw[u * n + v].filter(|&c| c <= gamma)
        };
        let dist = dijkstra_heap(n, &w);
        let to_goal = value_iteration(n, &w);
        let sel = select_landmark(&g);
        if !dist[GOAL].is_finite() {
            bad += usize::from(sel.is_some() || to_goal[CURRENT].is_finite());
            continue;
        }
        reachable += 1;
        let Some(sel) = sel else {
            bad += 1;
            continue;
        };
        let cost_ok = (sel.path_cost - dist[GOAL]).abs() <= 1e-9 && (sel.path_cost - to_goal[CURRENT]).abs() <= 1e-9;
        // Every first hop that starts an optimal path.
        let best: Vec<usize> = (0..n)
            .filter(|&v| w(CURRENT, v).is_some_and(|c| (c + to_goal[v] - to_goal[CURRENT]).abs() <= 1e-9))
            .collect();
        if best.len() > 1 {
            ties += 1;
        }
        let node_ok = if best.len() == 1 { sel.node == best[0] } else { best.contains(&sel.node) };
        bad += usize::from(!(cost_ok && node_ok));
    }
    outcome(bad == 0, format!("500 graphs ({reachable} reachable, {ties} with tied first hops), {bad} disagreements"))
}

// 4 ------------------------------------------------------------------------

const ROOMS: &str = "\
############
#S...#.....#
#.##.#.###.#
#.#......#.#
#.#.####.#.#
#...#..#...#
###.#..###.#
#......#...#
#.######.#.#
#........#G#
############
";

fn adjacency_matrix_oracle() -> Outcome {
    let mut spec = MazeSpec::from_layout(Layout::parse(ROOMS).unwrap(), Dynamics::Grid, 1.0);
    spec.max_steps = 60;
    let mut env = MazeEnv::new(spec.clone()).unwrap();
    let mut rng = seeded(404);
    let mut trajectories = Vec::new();
    for ep in 0..50u64 {
        let obs = env.reset(ep, true);
        let mut traj = vec![project(&obs, 2).to_vec()];
        let len = rng.random_range(5..=spec.max_steps);
        for _ in 0..len {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let out = env.step(&a).unwrap();
            traj.push(project(&out.state, 2).to_vec());
            if out.done {
                break;
            }
        }
        trajectories.push(traj);
    }
    let key = |g: &[f64]| (g[0].to_bits(), g[1].to_bits());
    let mut mismatches = 0;
    let mut checked = 0;
    for k in [1usize, 3, 5] {
        let mut m = AdjacencyMatrix::new(k, 0.5).unwrap();
        m.update(&trajectories).unwrap();
        // Brute-force scan of every within-trajectory pair.
        let mut truth = BTreeSet::new();
        for t in &trajectories {
            for a in 0..t.len() {
                for b in 0..t.len() {
                    if a.abs_diff(b) <= k {
                        truth.insert((key(&t[a]), key(&t[b])));
                    }
                }
            }
        }
        let cells: BTreeSet<_> = trajectories.iter().flatten().map(|g| key(g)).collect();
        if cells.len() != m.num_anchors() {
            mismatches += 1;
        }
        let anchors = m.anchors();
        for i in 0..anchors.len() {
            for j in 0..anchors.len() {
                checked += 1;
                let want = truth.contains(&(key(&anchors[i]), key(&anchors[j])));
                if m.is_adjacent(i, j) != want {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("50 trajectories, k in {{1, 3, 5}}, {checked} labels checked, {mismatches} mismatches"))
}

// 5 ------------------------------------------------------------------------

fn contrastive_margins() -> Outcome {
    // Anchors 0.25 apart: a fresh network embeds them far too close together
    // for the non-adjacent margin, so the margins have to be learned.
    let k = 2;
    let (eps, margin) = (1.0, 0.2);
    let chain: Vec<Vec<f64>> = (0..10).map(|i| vec![0.25 * i as f64]).collect();
    let mut m = AdjacencyMatrix::new(k, 0.1).unwrap();
    m.add_trajectory(&chain).unwrap();
    let mut net = AdjacencyNet::new(1, &[64, 64], 32, 1e-3, eps, margin, &mut seeded(505)).unwrap();

    let pairs: Vec<(usize, usize)> = (0..10).flat_map(|i| (0..10).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let a = Array2::from_shape_fn((pairs.len(), 1), |(r, _)| chain[pairs[r].0][0]);
    let b = Array2::from_shape_fn((pairs.len(), 1), |(r, _)| chain[pairs[r].1][0]);
    let labels: Vec<bool> = pairs.iter().map(|&(i, j)| m.is_adjacent(i, j)).collect();
    let initial = net.loss(&a, &b, &labels).unwrap();
    let mut loss = f64::INFINITY;
    let mut steps = 0;
    while loss >= 1e-3 && steps < 20_000 {
        net.train_batch(&a, &b, &labels).unwrap();
        loss = net.loss(&a, &b, &labels).unwrap();
        steps += 1;
    }
    let mut worst_pos: f64 = 0.0;
    let mut worst_neg = f64::INFINITY;
    let mut max_est_pos: f64 = 0.0;
    let mut min_est_neg = f64::INFINITY;
    for (&(i, j), &l) in pairs.iter().zip(&labels) {
        let d = net.embedding_distance(&chain[i], &chain[j]).unwrap();
        let est = net.estimate_distance(&chain[i], &chain[j], k).unwrap();
        if l {
            worst_pos = worst_pos.max(d);
            max_est_pos = max_est_pos.max(est);
        } else {
            worst_neg = worst_neg.min(d);
            min_est_neg = min_est_neg.min(est);
        }
    }
    let kf = k as f64;
    let pass = loss < 1e-3
        && worst_pos <= eps + 0.05
        && worst_neg >= eps + margin - 0.05
        && max_est_pos <= kf * 1.05
        && min_est_neg > kf * 1.05;
    outcome(
        pass,
        format!(
            "loss {initial:.3} -> {loss:.2e} after {steps} steps; adjacent max {worst_pos:.4}, non-adjacent min {worst_neg:.4}; \
             estimates adjacent <= {max_est_pos:.4}, non-adjacent >= {min_est_neg:.4}"
        ),
    )
}

// 6 ------------------------------------------------------------------------

/// Reference queue: (goal, priority, insertion order).
fn reference_insert(q: &mut Vec<(Vec<f64>, f64, u64)>, goal: &[f64], priority: f64, seq: u64, lambda: f64, cap: usize) {
    q.retain(|(g, _, _)| l2(g, goal) >= lambda);
    q.push((goal.to_vec(), priority, seq));
    if q.len() > cap {
        let mut worst = 0;
        for i in 1..q.len() {
            let (p, s) = (q[i].1, q[i].2);
            if p < q[worst].1 || (p == q[worst].1 && s < q[worst].2) {
                worst = i;
            }
        }
        q.remove(worst);
    }
}

fn queue_invariants() -> Outcome {
    let mut rng = seeded(606);
    let mut violations = 0;
    let mut ops = 0;
    for _ in 0..4 {
        let lambda = rng.random_range(0.05..0.6);
        let cap = rng.random_range(1..=60);
        let mut q = NoveltyQueue::new(cap, lambda).unwrap();
        let mut reference = Vec::new();
        for seq in 0..10_000u64 {
            let goal = [rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)];
            // Coarse priorities so that ties exercise the age rule.
            let priority = rng.random_range(0..20) as f64 / 4.0;
            q.insert(&goal, &goal, priority).unwrap();
            reference_insert(&mut reference, &goal, priority, seq, lambda, cap);
            ops += 1;
            let e = q.entries();
            let separated = e.iter().enumerate().all(|(i, a)| e[i + 1..].iter().all(|b| l2(&a.goal, &b.goal) >= lambda));
            let mut got: Vec<(u64, u64)> = e.iter().map(|x| (x.priority.to_bits(), x.seq)).collect();
            let mut want: Vec<(u64, u64)> = reference.iter().map(|x| (x.1.to_bits(), x.2)).collect();
            got.sort_unstable();
            want.sort_unstable();
            if !separated || e.len() > cap || got != want {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{ops} inserts over 4 streams, {violations} violations"))
}

// 7 ------------------------------------------------------------------------

fn rnd_behavior() -> Outcome {
    let mut pair = RndPair::new(2, &[64, 64], 32, 1e-3, &mut seeded(707)).unwrap();
    let seen = [1.0, 1.0];
    let far = [9.0, -7.0];
    let seen0 = pair.score(&seen).unwrap();
    let far0 = pair.score(&far).unwrap();
    let batch = Array2::from_shape_fn((32, 2), |(_, c)| seen[c]);
    for _ in 0..200 {
        pair.update(&batch).unwrap();
    }
    let seen1 = pair.score(&seen).unwrap();
    let far1 = pair.score(&far).unwrap();
    let drop_far = (far0 - far1) / far0;
    outcome(
        seen1 < 0.1 * seen0 && drop_far < 0.5,
        format!("trained state {seen0:.4} -> {seen1:.4}; held-out state {far0:.4} -> {far1:.4} ({:.1}% lower)", 100.0 * drop_far),
    )
}

// 8 ------------------------------------------------------------------------

fn pseudo_landmark_geometry() -> Outcome {
    let mut rng = seeded(808);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for i in 0..10_000 {
        let dim = rng.random_range(1..=4);
        let cur: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        let sel: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        let delta = if i % 10 == 0 { 0.0 } else { rng.random_range(0.0..15.0) };
        let p = pseudo_landmark(&cur, &sel, delta);
        let full = l2(&cur, &sel);
        let from_cur = l2(&cur, &p);
        // On the segment: the two legs add up to the whole.
        let off_segment = (from_cur + l2(&p, &sel) - full).abs();
        let err = (from_cur - delta.min(full)).abs();
        worst = worst.max(err).max(off_segment);
        if err > 1e-12 || off_segment > 1e-12 || (delta == 0.0 && p != cur) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("10000 triples, worst deviation {worst:.1e}, {bad} failures"))
}

// 9 ------------------------------------------------------------------------

/// Columns both runs produce; the novelty and landmark columns only exist
/// when the machinery is present.
fn shared_columns(m: &MetricsRecord) -> [u64; 8] {
    [
        m.step,
        m.episode,
        m.eval_success_rate.to_bits(),
        m.mean_episode_return.to_bits(),
        m.high_critic_loss.to_bits(),
        m.low_critic_loss.to_bits(),
        m.high_actor_loss.to_bits(),
        m.low_actor_loss.to_bits(),
    ]
}

fn ablation_identity() -> Outcome {
    let mut base = TrainConfig::grid();
    base.seed = 9;
    base.total_steps = 5000;
    base.eval.period = 500;
    let mut zeroed = base.clone();
    zeroed.landmarks.eta = 0.0;
    zeroed.landmarks.coverage = 0;
    zeroed.landmarks.novelty = 0;
    let mut bypassed = base;
    bypassed.landmarks.bypass = true;

    let mut a = Trainer::new(zeroed).unwrap();
    a.run().unwrap();
    let mut b = Trainer::new(bypassed).unwrap();
    b.run().unwrap();
    let ra: Vec<_> = a.metrics().iter().map(shared_columns).collect();
    let rb: Vec<_> = b.metrics().iter().map(shared_columns).collect();
    let same_params = a.high == b.high && a.low == b.low;
    outcome(
        ra == rb && same_params,
        format!("{} rows compared bit for bit, final policies identical: {same_params}", ra.len()),
    )
}

// 10 -----------------------------------------------------------------------

fn directional_learning() -> Outcome {
    let seeds = [0u64, 1, 2];
    let jobs: Vec<(u64, bool)> = seeds.iter().flat_map(|&s| [(s, true), (s, false)]).collect();
    let results = Mutex::new(vec![f64::NAN; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(seed, guided)) = jobs.get(i) else { break };
                let mut c = TrainConfig::default();
                c.seed = seed;
                c.eval.episodes = 20;
                if !guided {
                    c.landmarks.eta = 0.0;
                }
                let mut t = Trainer::new(c).unwrap();
                t.run().unwrap();
                let rate = t.metrics().last().unwrap().eval_success_rate;
                results.lock().unwrap()[i] = rate;
            });
        }
    });
    let r = results.into_inner().unwrap();
    let mut good = 0;
    let mut parts = Vec::new();
    for (k, &s) in seeds.iter().enumerate() {
        let (higl, base) = (r[2 * k], r[2 * k + 1]);
        let ok = higl >= 0.6 && higl - base >= 0.15;
        good += usize::from(ok);
        parts.push(format!("seed {s}: guided {higl:.2} vs eta=0 {base:.2}"));
    }
    outcome(good >= 2, format!("{}; {good} of 3 seeds satisfy both conditions", parts.join(", ")))
}

// 11 -----------------------------------------------------------------------

fn determinism_and_persistence() -> Outcome {
    let mut c = TrainConfig::grid();
    c.seed = 11;
    c.total_steps = 6000;
    c.eval.period = 1000;
    let full = |c: &TrainConfig| {
        let mut t = Trainer::new(c.clone()).unwrap();
        t.run().unwrap();
        to_csv(t.metrics())
    };
    let first = full(&c);
    let second = full(&c);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let mut t = Trainer::new(c.clone()).unwrap();
    t.run_until(c.total_steps / 2).unwrap();
    let mid_step = t.step();
    save_checkpoint(&t, &path).unwrap();
    drop(t);
    let mut resumed = load_checkpoint(&path).unwrap();
    resumed.run().unwrap();
    let after = to_csv(resumed.metrics());
    outcome(
        first == second && first == after,
        format!(
            "repeat run identical: {}, resumed from step {mid_step} identical: {}, {} metrics rows",
            first == second,
            first == after,
            first.lines().count() - 1
        ),
    )
}
