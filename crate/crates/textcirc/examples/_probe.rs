// scratch calibration probe (deleted before finishing)
use std::time::Instant;
use textcirc::circuit::{functor_apply, FunctorConfig, ParamStore};
use textcirc::compile::{lower, reuse_qubits};
use textcirc::diagram::{apply_rewrites, parse_story};
use textcirc::sim::{evaluate_pair, SimConfig};
use textcirc::story::*;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "density" => density(),
        "reuse" => reuse(),
        "train2" => train2(),
        "train4" => train4(),
        _ => println!("density|reuse|train2|train4"),
    }
}

fn train2() {
    use textcirc::train::*;
    use textcirc::interpret::Model;
    let simple = generate_simple(Dialect::TwoDir, 2..=8, DepthPolicy::Simple, 160, 101).unwrap();
    let split = split_datasets(simple, Dialect::TwoDir, 101).unwrap();
    println!("train {} validA {}", split.train.len(), split.valid_a.len());
    let mut best: Option<(f64, textcirc::ParamStore)> = None;
    for seed in [1u64, 2, 3, 4, 5] {
        let mut cfg = TrainConfig::new(Dialect::TwoDir, 0.005, 1, 50, seed);
        cfg.parallelism = 2;
        cfg.early_stop_valid_acc = Some(0.999);
        let t0 = Instant::now();
        let r = train(&split.train, &split.valid_a, &cfg).unwrap();
        let best_va = r.history.iter().map(|c| c.valid_accuracy).fold(0.0f64, f64::max);
        let epochs = r.history.len();
        println!("seed {seed}: best validA {best_va:.4} after {epochs} epochs ({:.0}s)", t0.elapsed().as_secs_f64());
        if best.as_ref().map_or(true, |(b, _)| best_va > *b) {
            best = Some((best_va, r.selected));
        }
    }
    let (va, params) = best.unwrap();
    println!("best seed validA {va}");
    // quick ValidComp subset: widths 9..12 simple + deeper
    let mut comp = generate_simple(Dialect::TwoDir, 9..=12, DepthPolicy::Simple, 24, 7).unwrap();
    comp.extend(generate_simple(Dialect::TwoDir, 9..=12, DepthPolicy::Deeper, 16, 8).unwrap());
    comp.extend(generate_tier(Dialect::TwoDir, Tier::Superdense, 9..=10, 8, 9).unwrap());
    let model = Model::Trained { params, config: FunctorConfig::default() };
    let t0 = Instant::now();
    let table = accuracy(&model, &comp, &Evaluator::Exact(&SimConfig::default())).unwrap();
    println!("ValidComp subset acc {:.4} (n={}) in {:.0}s", table.overall.accuracy, table.overall.n, t0.elapsed().as_secs_f64());
    for c in &table.per_width {
        println!("  w{}: {:.3} ({})", c.stratum, c.accuracy, c.n);
    }
}

fn train4() {
    use textcirc::train::*;
    use textcirc::interpret::*;
    let mut pool = generate_simple(Dialect::FourDir, 2..=8, DepthPolicy::Simple, 240, 11).unwrap();
    for (i, tier) in [Tier::Deeper, Tier::LessDense, Tier::Dense, Tier::Superdense].into_iter().enumerate() {
        pool.extend(generate_tier(Dialect::FourDir, tier, 6..=7, 16, 12 + i as u64).unwrap());
    }
    let split = split_datasets(pool, Dialect::FourDir, 11).unwrap();
    println!("train {} validA {}", split.train.len(), split.valid_a.len());
    let eval_set: Vec<Story> = {
        let mut v = generate_simple(Dialect::FourDir, 6..=9, DepthPolicy::Simple, 150, 31).unwrap();
        v.extend(generate_simple(Dialect::FourDir, 6..=9, DepthPolicy::Deeper, 60, 32).unwrap());
        v
    };
    for seed in [1u64, 2, 3] {
        let mut cfg = TrainConfig::new(Dialect::FourDir, 0.0284, 32, 40, seed);
        cfg.parallelism = 2;
        let t0 = Instant::now();
        let r = train(&split.train, &split.valid_a, &cfg).unwrap();
        let best_va = r.history.iter().map(|c| c.valid_accuracy).fold(0.0f64, f64::max);
        println!("seed {seed}: best validA {best_va:.4} sel epoch {} ({:.0}s)", r.selected_epoch, t0.elapsed().as_secs_f64());
        let model = Model::Trained { params: r.selected.clone(), config: FunctorConfig::default() };
        let reports = check_axioms(&model, 0.9).unwrap();
        for rep in &reports {
            if ["follows_idempotent", "left_through_follows", "left_maps_quarter_turn"].contains(&rep.id.as_str()) {
                println!("  axiom {}: {:.4} pass={}", rep.id, rep.value, rep.pass);
            }
        }
        let table = bias_table(&model, &eval_set, &SimConfig::default()).unwrap();
        for (pair, n, acc) in &table.by_direction_pair {
            println!("  pair {pair}: {acc:.3} (n={n})");
        }
    }
}

fn density() {
    let params = ParamStore::random(Dialect::TwoDir, 3);
    let sim = SimConfig::default();
    for width in [12usize, 13, 14] {
        let stories = generate_tier(Dialect::TwoDir, Tier::Superdense, width..=width, 1, 5).unwrap();
        let s = &stories[0];
        let d = apply_rewrites(&parse_story(s), s.dialect);
        let (pos, neg) = functor_apply(&d, &params, &FunctorConfig::default()).unwrap();
        println!("width {width}: total qubits {} depth {}", pos.num_qubits, s.sentences.len());
        let t0 = Instant::now();
        let r = evaluate_pair(&pos, &neg, &params, &sim).unwrap();
        println!("  evaluate_pair: {:.1}s p=({:.4},{:.4})", t0.elapsed().as_secs_f64(), r.p_pos, r.p_neg);
    }
}

fn reuse() {
    let params = ParamStore::random(Dialect::TwoDir, 3);
    let stories = generate_tier(Dialect::TwoDir, Tier::Dense, 21..=30, 100, 7).unwrap();
    let mut fit = 0;
    let mut max_pre = 0;
    let t0 = Instant::now();
    let mut per_width: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for s in &stories {
        let d = apply_rewrites(&parse_story(s), s.dialect);
        let (pos, _) = functor_apply(&d, &params, &FunctorConfig::default()).unwrap();
        let low = lower(&pos, &params).unwrap();
        let (_, rep) = reuse_qubits(&low);
        max_pre = max_pre.max(rep.qubits_before);
        if rep.qubits_after <= 20 { fit += 1; }
        per_width.entry(s.width).or_default().push(rep.qubits_after);
    }
    println!("reuse: {}/{} fit <=20; largest pre-reuse {}; {:.1}s", fit, stories.len(), max_pre, t0.elapsed().as_secs_f64());
    for (w, v) in per_width {
        let min = v.iter().min().unwrap();
        let max = v.iter().max().unwrap();
        let mean: f64 = v.iter().sum::<usize>() as f64 / v.len() as f64;
        println!("  width {w}: post-reuse min {min} mean {mean:.1} max {max} (n={})", v.len());
    }
}
