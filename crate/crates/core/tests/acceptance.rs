//! Acceptance suite. Each criterion runs in isolation, prints one
//! `[PASS]`/`[FAIL]` line (written past the test harness's output capture so
//! the lines show up in plain `cargo test` logs), and the test fails if any
//! criterion does.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use audiorouter::dsp::{self, synth};
use audiorouter::eval::{self, RouterStrategy, HOLDOUT_FRACTION};
use audiorouter::grpo::{self, compute_advantages, exact_kl, surrogate_gradient, warmup_format, GroupBatch};
use audiorouter::reward::relative_outcome_reward;
use audiorouter::rng;
use audiorouter::toolbus::{self, ToolRequest};
use audiorouter::traces::{self, FeatureDict};
use audiorouter::types::{Adapter, Rollout};
use audiorouter::world::{generate_world, sample_outcome, SpecOracle};
use audiorouter::{
    train, ActionId, ActionSpace, Dataset, GrpoConfig, OutcomeSpec, PolicyParams, RewardConfig, TaskInstance,
    ToolRegistry, ToolSpec, WorldSpec,
};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, Duration, Check); 11] = [
        ("reward exactness", Duration::from_millis(100), reward_exactness),
        ("advantage normalization", Duration::from_secs(1), advantage_normalization),
        ("gradient check", Duration::from_secs(5), gradient_check),
        ("KL properties", Duration::from_secs(1), kl_properties),
        ("separable-world convergence", Duration::from_secs(60), separable_convergence),
        ("ordering reproduction", Duration::from_secs(90), ordering),
        ("redundancy suppression", Duration::from_secs(30), redundancy_suppression),
        ("warm-up efficacy", Duration::from_secs(5), warmup_efficacy),
        ("DSP fidelity", Duration::from_secs(5), dsp_fidelity),
        ("protocol round-trips", Duration::from_secs(5), protocol_round_trips),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (n, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = t.elapsed();
        let res = match res {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; took {elapsed:.2?} > {budget:?}")),
            r => r,
        };
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d.clone()),
            Err(e) => ("FAIL", e.clone()),
        };
        writeln!(out, "[{tag}] {}. {name} ({elapsed:.2?}): {detail}", n + 1).unwrap();
        if res.is_err() {
            failed.push(n + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// 1 ------------------------------------------------------------------------

fn reward_exactness() -> Result<String, String> {
    let cfg = RewardConfig::default();
    let tool = ActionId::tool("audio_features");
    let direct = ActionId::direct();
    let cases = [
        (&tool, false, Some(true), 5.0),
        (&tool, true, Some(false), -5.0),
        (&tool, true, Some(true), -0.1),
        (&tool, false, Some(false), -0.1),
        (&tool, true, None, 0.0),
        (&tool, false, None, 0.0),
        (&direct, true, None, 1.0),
        (&direct, false, None, -1.0),
    ];
    for (a, d, t, want) in cases {
        let got = relative_outcome_reward(&cfg, a, d, t);
        ensure!(got == want, "{a} dir={d} tool={t:?}: {got} != {want}");
    }
    Ok(format!("{} cases exact", cases.len()))
}

// 2 ------------------------------------------------------------------------

fn advantage_normalization() -> Result<String, String> {
    let mut r = rng::stream(2, &[]);
    let palette = [5.0, -5.0, -0.1, 1.0, -1.0, 0.0];
    let (mut normalized, mut constant) = (0, 0);
    for g in 0..1000 {
        let rewards: Vec<f64> = match g % 4 {
            0 => vec![*palette.choose(&mut r).unwrap(); 8],
            1 => (0..8).map(|_| r.gen_range(-10.0..10.0)).collect(),
            _ => (0..8).map(|_| *palette.choose(&mut r).unwrap()).collect(),
        };
        let mean = rewards.iter().sum::<f64>() / 8.0;
        let std = (rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
        let a = compute_advantages(&rewards, 1e-8);
        if std >= 1e-8 {
            let am = a.iter().sum::<f64>() / 8.0;
            let astd = (a.iter().map(|x| (x - am).powi(2)).sum::<f64>() / 7.0).sqrt();
            ensure!(am.abs() <= 1e-9, "group {g}: mean {am}");
            ensure!((astd - 1.0).abs() <= 1e-6, "group {g}: std {astd}");
            normalized += 1;
        } else {
            ensure!(a.iter().all(|&x| x == 0.0), "group {g}: constant group gave {a:?}");
            constant += 1;
        }
    }
    Ok(format!("{normalized} normalized, {constant} constant groups"))
}

// 3 ------------------------------------------------------------------------

fn random_space(r: &mut impl Rng) -> ActionSpace {
    let k = r.gen_range(1..=4);
    let reg = ToolRegistry::from_specs((0..k).map(|i| ToolSpec::simulated(&format!("tool{i}"), &[]))).unwrap();
    ActionSpace::new(&reg, r.gen_range(0..=2))
}

fn random_instance(r: &mut impl Rng, f: usize, id: &str) -> TaskInstance {
    let mut features: Vec<usize> = (0..f).filter(|_| r.gen_bool(0.4)).collect();
    features.sort_unstable();
    TaskInstance {
        id: id.into(),
        category: "mixed".into(),
        features,
        option_count: 4,
        outcome: OutcomeSpec {
            p_dir: 0.5,
            p_tool: Default::default(),
            unexecuted: Default::default(),
            deterministic: true,
            seed_salt: 0,
        },
    }
}

fn random_params(r: &mut impl Rng, f: usize, actions: &ActionSpace, scale: f64) -> PolicyParams {
    let mut p = PolicyParams::zeros(f, actions.clone()).with_temperature(r.gen_range(0.5..2.0));
    for w in p.weights_mut() {
        *w = r.gen_range(-scale..scale);
    }
    p
}

/// Independent evaluation of the mean clipped surrogate minus the KL penalty.
fn reference_objective(groups: &[GroupBatch<'_>], p: &PolicyParams, reference: &PolicyParams, cfg: &GrpoConfig) -> f64 {
    let mut total = 0.0;
    for g in groups {
        let logp = p.log_probs(g.instance);
        let logr = reference.log_probs(g.instance);
        let n = g.rollouts.len() as f64;
        let mean = g.rollouts.iter().map(|x| x.reward).sum::<f64>() / n;
        let std = (g.rollouts.iter().map(|x| (x.reward - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut s = 0.0;
        for ro in &g.rollouts {
            let adv = if std >= cfg.std_guard { (ro.reward - mean) / std } else { 0.0 };
            let a = p.actions().index_of(&ro.action).unwrap();
            let rho = (logp[a] - ro.behavior_logprob).exp();
            s += (rho * adv).min(rho.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv);
        }
        let kl: f64 = logp.iter().zip(&logr).map(|(lp, lr)| lp.exp() * (lp - lr)).sum();
        total += s / n - cfg.kl_beta * kl;
    }
    total / groups.len() as f64
}

fn gradient_check() -> Result<String, String> {
    let h = 1e-5;
    let cfg = GrpoConfig::default();
    let palette = [5.0, -5.0, -0.1, 1.0, -1.0];
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..20u64 {
        let mut r = rng::stream(seed, &[3]);
        let f = r.gen_range(2..=6);
        let actions = random_space(&mut r);
        let mut params = random_params(&mut r, f, &actions, 1.0);
        if r.gen_bool(0.3) {
            let masked: Vec<usize> = (0..f).filter(|_| r.gen_bool(0.3)).collect();
            params = params.with_mask(masked);
        }
        let reference = random_params(&mut r, f, &actions, 1.0).with_temperature(params.temperature());
        // behavior policy a small step away, so ratios spread around 1 and
        // some land in the clipped region
        let mut behavior = params.clone();
        for w in behavior.weights_mut() {
            *w += r.gen_range(-0.3..0.3);
        }
        let instances: Vec<TaskInstance> =
            (0..r.gen_range(1..=3)).map(|i| random_instance(&mut r, f, &format!("s{seed}i{i}"))).collect();
        let groups: Vec<GroupBatch<'_>> = instances
            .iter()
            .map(|inst| GroupBatch {
                instance: inst,
                rollouts: (0..8)
                    .map(|_| {
                        let (action, lp) = behavior.sample_action(inst, &mut r);
                        Rollout {
                            instance_id: inst.id.clone(),
                            action,
                            acc_dir: None,
                            acc_tool: None,
                            reward: *palette.choose(&mut r).unwrap(),
                            behavior_logprob: lp,
                        }
                    })
                    .collect(),
            })
            .collect();

        // stay off the clip kinks, where the objective is not differentiable
        for g in &groups {
            let logp = params.log_probs(g.instance);
            for ro in &g.rollouts {
                let rho = (logp[actions.index_of(&ro.action).unwrap()] - ro.behavior_logprob).exp();
                ensure!(
                    (rho - 1.0 - cfg.clip_eps).abs() > 1e-3 && (rho - 1.0 + cfg.clip_eps).abs() > 1e-3,
                    "seed {seed}: ratio {rho} sits on a clip boundary"
                );
            }
        }

        let (value, grad) = surrogate_gradient(&groups, &params, &reference, &cfg);
        let ref_value = reference_objective(&groups, &params, &reference, &cfg);
        ensure!((value - ref_value).abs() <= 1e-12 * (1.0 + ref_value.abs()), "seed {seed}: value {value} vs {ref_value}");
        for i in 0..grad.len() {
            let mut plus = params.clone();
            plus.weights_mut()[i] += h;
            let mut minus = params.clone();
            minus.weights_mut()[i] -= h;
            let fd = (reference_objective(&groups, &plus, &reference, &cfg)
                - reference_objective(&groups, &minus, &reference, &cfg))
                / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
            ensure!(rel <= 1e-5, "seed {seed} weight {i}: analytic {} vs numeric {fd} (rel {rel:.2e})", grad[i]);
        }
    }
    Ok(format!("{checked} partials over 20 seeds, max rel err {worst:.2e}"))
}

// 4 ------------------------------------------------------------------------

fn kl_properties() -> Result<String, String> {
    let mut r = rng::stream(4, &[]);
    let mut min_kl = f64::INFINITY;
    for i in 0..1000 {
        let f = r.gen_range(1..=5);
        let actions = random_space(&mut r);
        let p = random_params(&mut r, f, &actions, 3.0);
        let q = random_params(&mut r, f, &actions, 3.0).with_temperature(p.temperature());
        let inst = random_instance(&mut r, f, &format!("k{i}"));
        let kl = exact_kl(&p, &q, &inst);
        ensure!(kl >= 0.0, "pair {i}: KL {kl} < 0");
        let same = exact_kl(&p, &p, &inst);
        ensure!(same.abs() <= 1e-12, "pair {i}: KL(p||p) = {same}");
        min_kl = min_kl.min(kl);
    }
    // pi = (1/2, 1/2), ref = (1/4, 3/4)
    let reg = ToolRegistry::from_specs([ToolSpec::simulated("t", &[])]).unwrap();
    let actions = ActionSpace::new(&reg, 0);
    let p = PolicyParams::zeros(0, actions.clone());
    let mut q = PolicyParams::zeros(0, actions);
    q.set_weight(0, 1, 3f64.ln());
    let inst = random_instance(&mut r, 0, "closed");
    let want = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    let got = exact_kl(&p, &q, &inst);
    ensure!((got - want).abs() <= 1e-9, "closed form {want} vs {got}");
    Ok(format!("1000 pairs, min KL {min_kl:.3e}; two-action case {got:.6}"))
}

// 5-7 ----------------------------------------------------------------------

/// Accuracy of the best available route per instance, enumerating the
/// realized bits directly rather than going through the evaluator.
fn brute_force(dataset: &Dataset, actions: &ActionSpace) -> (f64, f64) {
    let mut r = rng::stream(0, &[]);
    let (mut best, mut dir) = (0usize, 0usize);
    for inst in &dataset.instances {
        let (d, _) = sample_outcome(inst, &ActionId::direct(), &mut r).unwrap();
        let any_tool = actions.tools().any(|t| sample_outcome(inst, t, &mut r).unwrap().1 == Some(true));
        best += (d || any_tool) as usize;
        dir += d as usize;
    }
    let n = dataset.len() as f64;
    (best as f64 / n, dir as f64 / n)
}

fn separable_convergence() -> Result<String, String> {
    let w = generate_world(&WorldSpec::separable(7)).map_err(|e| e.to_string())?;
    let actions = ActionSpace::new(&w.registry(), 0);
    let (oracle, direct) = brute_force(&w.dataset, &actions);
    let eval_oracle = eval::evaluate(&RouterStrategy::Oracle, &w.dataset, &actions).unwrap().accuracy;
    ensure!((eval_oracle - oracle).abs() < 1e-12, "evaluator oracle {eval_oracle} != enumeration {oracle}");
    let init = PolicyParams::zeros(w.dataset.feature_dim, actions.clone());
    let cfg = GrpoConfig { seed: 7, ..GrpoConfig::default() };
    let (p, _) = train(&w.dataset, &init, &cfg, &RewardConfig::default(), &SpecOracle).map_err(|e| e.to_string())?;
    let acc = eval::evaluate(&RouterStrategy::Learned(p), &w.dataset, &actions).unwrap().accuracy;
    ensure!(acc >= oracle - 0.02, "learned {acc:.4} < oracle {oracle:.4} - 0.02");
    ensure!(acc >= direct + 0.08, "learned {acc:.4} < always_direct {direct:.4} + 0.08");
    Ok(format!("learned {acc:.4}, oracle {oracle:.4}, always_direct {direct:.4}"))
}

fn ordering() -> Result<String, String> {
    let w = generate_world(&WorldSpec::separable(7)).map_err(|e| e.to_string())?;
    let actions = ActionSpace::new(&w.registry(), 0);
    let (tr, ho) = w.dataset.split_holdout(HOLDOUT_FRACTION);
    let init = PolicyParams::zeros(w.dataset.feature_dim, actions.clone());
    let cfg = GrpoConfig { seed: 7, ..GrpoConfig::default() };
    let (p, _) = train(&tr, &init, &cfg, &RewardConfig::default(), &SpecOracle).map_err(|e| e.to_string())?;
    let keywords = w.layout.keywords.iter().map(|(t, i)| (*i, t.clone())).collect();
    let acc = |s: RouterStrategy| eval::evaluate(&s, &ho, &actions).unwrap().accuracy;
    let learned = acc(RouterStrategy::Learned(p));
    let keyword = acc(RouterStrategy::KeywordHeuristic { keywords });
    let random = acc(RouterStrategy::Random { seed: 7 });
    ensure!(learned >= keyword + 0.02, "learned {learned:.4} vs keyword_heuristic {keyword:.4}");
    ensure!(keyword >= random + 0.02, "keyword_heuristic {keyword:.4} vs random {random:.4}");
    Ok(format!("held-out learned {learned:.4} > keyword_heuristic {keyword:.4} > random {random:.4}"))
}

fn redundancy_suppression() -> Result<String, String> {
    let w = generate_world(&WorldSpec::no_effect(7)).map_err(|e| e.to_string())?;
    for inst in &w.dataset.instances {
        ensure!(inst.outcome.p_tool.values().all(|&p| p == inst.outcome.p_dir), "{}: tool changes correctness", inst.id);
    }
    let actions = ActionSpace::new(&w.registry(), 0);
    let init = PolicyParams::zeros(w.dataset.feature_dim, actions.clone());
    let cfg = GrpoConfig { seed: 7, ..GrpoConfig::default() };
    let (p, _) = train(&w.dataset, &init, &cfg, &RewardConfig::default(), &SpecOracle).map_err(|e| e.to_string())?;
    let m = eval::evaluate(&RouterStrategy::Learned(p), &w.dataset, &actions).unwrap();
    ensure!(m.tool_rate <= 0.05, "tool rate {:.4} > 0.05", m.tool_rate);
    Ok(format!("tool rate {:.4}", m.tool_rate))
}

// 8 ------------------------------------------------------------------------

fn warmup_efficacy() -> Result<String, String> {
    let w = generate_world(&WorldSpec { num_instances: 100, ..WorldSpec::separable(8) }).map_err(|e| e.to_string())?;
    let actions = ActionSpace::new(&w.registry(), 4);
    let init = PolicyParams::zeros(w.dataset.feature_dim, actions.clone());
    let cfg = GrpoConfig { warmup_steps: 50, ..GrpoConfig::default() };
    let (p, log) = warmup_format(&init, &w.dataset.instances, &cfg, &RewardConfig::default()).map_err(|e| e.to_string())?;
    ensure!(log.len() == 50, "{} warm-up steps logged", log.len());
    let decoys: Vec<usize> = (0..actions.len()).filter(|&i| actions.get(i).is_decoy()).collect();
    ensure!(decoys.len() == 4, "{} decoys", decoys.len());
    let mass = w
        .dataset
        .instances
        .iter()
        .map(|i| {
            let d = p.action_distribution(i);
            decoys.iter().map(|&k| d[k]).sum::<f64>()
        })
        .sum::<f64>()
        / w.dataset.len() as f64;
    ensure!(mass < 0.01, "mean decoy mass {mass:.4}");

    let mut shifted = w.dataset.instances.clone();
    for inst in &mut shifted {
        inst.outcome.p_dir = 1.0 - inst.outcome.p_dir;
        for v in inst.outcome.p_tool.values_mut() {
            *v = 0.0;
        }
        inst.outcome.seed_salt ^= 0xdead_beef;
    }
    let (p2, log2) = warmup_format(&init, &shifted, &cfg, &RewardConfig::default()).map_err(|e| e.to_string())?;
    ensure!(p2 == p && log2 == log, "warm-up output depends on outcome probabilities");
    Ok(format!("mean decoy mass {mass:.5} over {} instances", w.dataset.len()))
}

// 9 ------------------------------------------------------------------------

fn dsp_fidelity() -> Result<String, String> {
    let sr = 44_100;
    let pitch = dsp::estimate_pitch(&synth::sine(440.0, 1.0, sr, 0.5)).map_err(|e| e.to_string())?;
    ensure!((pitch - 440.0).abs() <= 1.0, "pitch {pitch}");
    let tempo = dsp::estimate_tempo(&synth::click_track(120.0, 8.0, sr)).map_err(|e| e.to_string())?;
    ensure!((tempo - 120.0).abs() <= 2.0, "tempo {tempo}");
    let burst = synth::tone_burst(440.0, 1.0, 2.0, 3.0, sr);
    let segs = dsp::active_segments(&burst, dsp::SEGMENT_WINDOW_MS, dsp::SEGMENT_THRESHOLD_DB);
    ensure!(segs.len() == 1, "{} segments for the tone burst", segs.len());
    ensure!(
        (segs[0].start_s - 1.0).abs() <= 0.05 && (segs[0].end_s - 2.0).abs() <= 0.05,
        "segment {:?}",
        segs[0]
    );
    let silence = synth::silence(2.0, sr);
    let n_silent = dsp::active_segments(&silence, dsp::SEGMENT_WINDOW_MS, dsp::SEGMENT_THRESHOLD_DB).len();
    ensure!(n_silent == 0, "{n_silent} segments in silence");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("silence.wav");
    dsp::write_wav_pcm16(&path, &silence).map_err(|e| e.to_string())?;
    let res = toolbus::invoke(
        &ToolRegistry::audio_toolkit(),
        "audio_features",
        &ToolRequest::with_audio(path.to_string_lossy()),
    )
    .map_err(|e| e.to_string())?;
    ensure!(!res.is_ok(), "audio_features on silence: {res:?}");
    Ok(format!(
        "pitch {pitch:.2} Hz, tempo {tempo:.2} BPM, segment [{:.3}, {:.3}] s",
        segs[0].start_s, segs[0].end_s
    ))
}

// 10 -----------------------------------------------------------------------

fn echo_registry(dir: &Path) -> ToolRegistry {
    let echo = dir.join("echo.py");
    std::fs::write(
        &echo,
        "import json, sys\nreq = json.loads(sys.stdin.readline())\n\
         print(json.dumps({'status': 'ok', 'result': {'tool': req['tool'], 'audio': req['audio_path'], 'n': req['params']['n']}}))\n",
    )
    .unwrap();
    let slow = dir.join("slow.py");
    std::fs::write(&slow, "import time\ntime.sleep(10)\n").unwrap();
    let py = |p: &Path| vec!["python3".to_string(), p.to_string_lossy().into_owned()];
    ToolRegistry::from_specs([
        ToolSpec::simulated("echo", &[]).with_adapter(Adapter::Subprocess { command: py(&echo), timeout_ms: 5000 }),
        ToolSpec::simulated("slow", &[]).with_adapter(Adapter::Subprocess { command: py(&slow), timeout_ms: 300 }),
    ])
    .unwrap()
}

fn protocol_round_trips() -> Result<String, String> {
    let reg = ToolRegistry::audio_toolkit();
    let mut all: Vec<ActionId> = reg.names().map(ActionId::tool).collect();
    all.push(ActionId::decoy("pitch_shift_detector"));
    for a in &all {
        let text = toolbus::serialize_tool_call(a).map_err(|e| e.to_string())?;
        let back = toolbus::parse_tool_call(&text, &reg).map_err(|e| e.to_string())?;
        ensure!(&back == a, "{a} parsed back as {back}");
    }
    ensure!(toolbus::serialize_tool_call(&ActionId::direct()).is_err(), "direct serialized as a tool call");

    let w = generate_world(&WorldSpec { num_instances: 1500, ..WorldSpec::separable(10) }).map_err(|e| e.to_string())?;
    let text = traces::traces_text(&w.dataset).map_err(|e| e.to_string())?;
    let dict = FeatureDict::new(w.dataset.feature_dim);
    let (loaded, report) = traces::parse_traces(&text, &dict, &w.registry(), false).map_err(|e| e.to_string())?;
    ensure!(report.errors.is_empty() && loaded.len() == 1500, "{} loaded, {} errors", loaded.len(), report.errors.len());
    for (a, b) in w.dataset.instances.iter().zip(&loaded.instances) {
        ensure!(a.id == b.id && a.features == b.features && a.category == b.category, "{} changed", a.id);
        ensure!(a.outcome.realized_dir(&a.id) == b.outcome.realized_dir(&b.id), "{}: direct bit changed", a.id);
        for t in a.outcome.p_tool.keys() {
            ensure!(
                a.outcome.realized_tool(&a.id, t) == b.outcome.realized_tool(&b.id, t),
                "{}: {t} bit changed",
                a.id
            );
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("traces.jsonl");
    traces::save_traces(&loaded, &path).map_err(|e| e.to_string())?;
    let (again, _) = traces::load_traces(&path, &dict, &w.registry(), false).map_err(|e| e.to_string())?;
    ensure!(again == loaded, "save/load changed the dataset");
    ensure!(std::fs::read_to_string(&path).unwrap() == text, "re-exported text differs");

    let reg = echo_registry(dir.path());
    let res = toolbus::invoke(&reg, "echo", &ToolRequest::with_audio("clip.wav").param("n", 3))
        .map_err(|e| e.to_string())?;
    ensure!(res.is_ok(), "echo failed: {res:?}");
    let got = serde_json::to_value(&res.result).unwrap();
    ensure!(got == serde_json::json!({"tool": "echo", "audio": "clip.wav", "n": 3.0}), "echo result {got}");
    let t = Instant::now();
    let slow = toolbus::invoke(&reg, "slow", &ToolRequest::with_audio("clip.wav")).map_err(|e| e.to_string())?;
    ensure!(!slow.is_ok() && slow.message.as_deref().unwrap_or("").contains("timeout"), "slow tool gave {slow:?}");
    ensure!(t.elapsed() < Duration::from_secs(2), "timeout took {:?}", t.elapsed());
    Ok(format!("{} calls, 1500 trace records, echo + timeout", all.len()))
}

// 11 -----------------------------------------------------------------------

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.json");
    let spec = serde_json::to_value(WorldSpec::separable(7)).unwrap();
    let doc = serde_json::json!({"data": {"world_spec": spec}, "seed": 7, "decoy_count": 2});
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let bin = env!("CARGO_BIN_EXE_audiorouter");
    let run = |workers: &str, out: &Path, args: &[&str]| -> Result<(), String> {
        let o = Command::new(bin)
            .args(args)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--workers", workers])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(o.status.success(), "{args:?} with {workers} workers: {}", String::from_utf8_lossy(&o.stderr));
        Ok(())
    };
    let mut files = Vec::new();
    for workers in ["1", "8"] {
        let out = dir.path().join(format!("w{workers}"));
        run(workers, &out, &["train"])?;
        let ckpt = out.join("policy.json");
        run(workers, &out, &["eval", "--strategy", "learned", "--checkpoint", ckpt.to_str().unwrap()])?;
        files.push(out);
    }
    for name in ["policy.json", "metrics.json", "train_log.jsonl", "run.json", "eval_learned.json"] {
        let a = std::fs::read(files[0].join(name)).map_err(|e| format!("{name}: {e}"))?;
        let b = std::fs::read(files[1].join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure!(a == b, "{name} differs between 1 and 8 workers");
    }
    Ok("checkpoint, log and metric files byte-identical at 1 and 8 workers".into())
}

#[test]
fn separable_convergence_holds_across_seeds() {
    // the pinned claim is for seed 7; make sure it is not a lucky draw
    for seed in [1u64, 2, 3] {
        let w = generate_world(&WorldSpec::separable(seed)).unwrap();
        let actions = ActionSpace::new(&w.registry(), 0);
        let (oracle, _) = brute_force(&w.dataset, &actions);
        let init = PolicyParams::zeros(w.dataset.feature_dim, actions.clone());
        let (p, _) = grpo::train(
            &w.dataset,
            &init,
            &GrpoConfig { seed, ..GrpoConfig::default() },
            &RewardConfig::default(),
            &SpecOracle,
        )
        .unwrap();
        let acc = eval::evaluate(&RouterStrategy::Learned(p), &w.dataset, &actions).unwrap().accuracy;
        assert!(acc >= oracle - 0.02, "seed {seed}: {acc} vs {oracle}");
    }
}
