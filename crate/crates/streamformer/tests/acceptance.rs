//! Acceptance run: one PASS/FAIL line per criterion, each checked against
//! an oracle written here and timed against its budget. Exits nonzero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use streamformer::decode::encode;
use streamformer::model::{param_count, Model, ModelSpec, Runtime, SizeName, VariantName};
use streamformer_core::attention::{
    augmem_layer_forward, weak_attention_suppress, AttentionWeights, MemoryBank, SegmentInput,
    SuppressionConfig, NUM_POSITION_BUCKETS,
};
use streamformer_core::encoder::vgg::{
    subsampled_len, vgg_subsample, FrontEnd, VggShape, VggWeights,
};
use streamformer_core::encoder::{Encoder, EncoderConfig};
use streamformer_core::params::{Init, INIT_SCALE};
use streamformer_core::rng::{synth_features, SeededRng};
use streamformer_core::stream::{lookahead_ms, SegmentStream, SegmenterConfig, StreamSession};
use streamformer_core::transducer::{
    beam_decode, greedy_decode, rnnt_loss, BeamConfig, CountBigramLm, Fusion, JointModel,
    RnntLattice,
};
use streamformer_core::Matrix;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn criterion(id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (ok, detail) = match result {
        Ok(o) => (o.ok, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let in_time = elapsed < limit;
    let pass = ok && in_time;
    println!(
        "criterion {id:>2} {name:<24} {} ({:.2} s, limit {} s){}: {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { " over time" },
    );
    pass
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streamformer"))
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------- params

/// Parameter total written out layer by layer from the architecture.
fn expected_params(dim: usize, conformer: bool) -> usize {
    let (d, heads, kernel, layers, bins) = (dim, 4, 32, 16, 80);
    let (c1, c2) = (32, 64);
    let vgg = (9 * c1 + c1)
        + (9 * c1 * c1 + c1)
        + (9 * c1 * c2 + c2)
        + (9 * c2 * c2 + c2)
        + (c2 * (bins / 4) * d + d);
    let norm = 2 * d;
    let ffn = norm + (4 * d * d + 4 * d) + (4 * d * d + d);
    let attn = norm + 4 * (d * d + d) + heads * NUM_POSITION_BUCKETS;
    let conv = norm + (2 * d * d + 2 * d) + (d * kernel + d) + norm + (d * d + d);
    let block = 2 * ffn + attn + if conformer { conv } else { 0 } + norm;
    let (v, e, h, j) = (1024, 256, 320, 640);
    let predictor = (v + 1) * e + 4 * h * e + 4 * h * h + 4 * h + (j * h + j);
    let joiner = (j * d + j) + ((v + 1) * j + (v + 1));
    vgg + layers * block + predictor + joiner
}

fn params() -> Outcome {
    let cs = param_count(&ModelSpec::preset(VariantName::Conformer, SizeName::Small)).unwrap();
    let cm = param_count(&ModelSpec::preset(VariantName::Conformer, SizeName::Medium)).unwrap();
    let exact = cs == expected_params(144, true) && cm == expected_params(256, true);
    let s_ok = (cs as f64 - 10.3e6).abs() <= 0.1 * 10.3e6;
    let m_ok = (cm as f64 - 27.9e6).abs() <= 0.1 * 27.9e6;
    outcome(
        exact && s_ok && m_ok,
        format!(
            "S={cs} ({:+.1}%), M={cm} ({:+.1}%), layer-by-layer count {}",
            100.0 * (cs as f64 / 10.3e6 - 1.0),
            100.0 * (cm as f64 / 27.9e6 - 1.0),
            if exact { "agrees" } else { "disagrees" }
        ),
    )
}

// ------------------------------------------------------------- lookahead

fn lookahead() -> Outcome {
    let cfg = SegmenterConfig::default();
    let by_hand = cfg.right as f64 * cfg.subsample_factor as f64 * cfg.frame_shift_ms;
    let out = bin().arg("lookahead").output().unwrap();
    let printed = String::from_utf8_lossy(&out.stdout).trim().to_owned();
    outcome(
        lookahead_ms(&cfg) == 320.0 && by_hand == 320.0 && printed == "320" && out.status.success(),
        format!("library {} ms, cli prints {printed:?}", lookahead_ms(&cfg)),
    )
}

// ------------------------------------------------------------------- WAS

/// Threshold and renormalization computed in f64 from scratch.
fn was_oracle(p: &[f32], gamma: f64) -> Vec<f64> {
    let n = p.len() as f64;
    let mean = p.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let var = p
        .iter()
        .map(|&x| (f64::from(x) - mean).powi(2))
        .sum::<f64>()
        / n;
    let theta = mean - gamma * var.sqrt();
    let kept: Vec<f64> = p
        .iter()
        .map(|&x| {
            if f64::from(x) >= theta {
                f64::from(x)
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = kept.iter().sum();
    kept.iter().map(|x| x / z).collect()
}

fn was() -> Outcome {
    let gammas = [0.0f32, 0.25, 0.5, 1.0];
    let mut rng = SeededRng::new(2024);
    let mut failures = Vec::new();
    let mut worst_sum = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for row in 0..1000 {
        let n = rng.range(2, 513);
        let temp = rng.uniform(0.05, 10.0);
        let logits: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.uniform(-1.0, 1.0)) * f64::from(temp))
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        let p: Vec<f32> = logits.iter().map(|l| ((l - m).exp() / z) as f32).collect();
        let top = p.iter().cloned().fold(f32::MIN, f32::max);
        let mut survivors_prev: Option<Vec<bool>> = None;
        for &g in &gammas {
            let out = weak_attention_suppress(&p, g);
            let oracle = was_oracle(&p, f64::from(g));
            let sum: f64 = out.iter().map(|&x| f64::from(x)).sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
            let mut bad = (sum - 1.0).abs() > 1e-6;
            for (i, (&o, &w)) in out.iter().zip(&oracle).enumerate() {
                worst_oracle = worst_oracle.max((f64::from(o) - w).abs());
                bad |= w == 0.0 && o != 0.0;
                bad |= p[i] == top && o == 0.0;
            }
            let survivors: Vec<bool> = out.iter().map(|&x| x != 0.0).collect();
            if let Some(prev) = &survivors_prev {
                bad |= prev.iter().zip(&survivors).any(|(&a, &b)| a && !b);
            }
            survivors_prev = Some(survivors);
            if bad {
                failures.push((row, g));
            }
        }
    }
    let hand = weak_attention_suppress(&[0.4, 0.3, 0.2, 0.1], 0.5);
    let hand_ok = [0.4444, 0.3333, 0.2222, 0.0]
        .iter()
        .zip(&hand)
        .all(|(w, &h)| (f64::from(h) - w).abs() <= 1e-4);
    outcome(
        failures.is_empty() && hand_ok && worst_oracle <= 1e-6,
        format!(
            "{} bad (row, gamma) pairs, worst |sum-1| {worst_sum:.1e}, worst oracle diff {worst_oracle:.1e}, hand vector {hand:?}",
            failures.len()
        ),
    )
}

// ------------------------------------------------------------- causality

fn causality() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for layers in [1, 4, 16] {
        let enc = Encoder::random(EncoderConfig::toy(64, layers), 100 + layers as u64).unwrap();
        let seg = enc.config().segmenter;
        let (c, r) = (seg.center, seg.right);
        let segments = 4;
        let total = segments * c + r + c;
        let mut rng = SeededRng::new(7 * layers as u64);
        let frames = rng.uniform_matrix(total, 64, -2.0, 2.0);
        // Segment n (1-based) covers centers [(n-1)C, nC) and needs frames
        // up to nC + R.
        let context_end = |n: usize| n * c + r;
        let reference = SegmentStream::new(&enc).push_frames(&frames).unwrap();
        let snapshots: Vec<SegmentStream> = (1..=segments)
            .map(|n| {
                let mut s = SegmentStream::new(&enc);
                s.push_frames(&frames.slice_rows(0..context_end(n) - 1))
                    .unwrap();
                s
            })
            .collect();

        let mut changed = 0;
        for _ in 0..200 {
            let n = rng.range(1, segments + 1);
            let end = context_end(n);
            let mut tail = frames.slice_rows(end - 1..end + c - 1);
            for _ in 0..rng.range(1, 9) {
                let row = rng.range(1, tail.rows());
                let col = rng.range(0, 64);
                tail.set(row, col, rng.uniform(-50.0, 50.0));
            }
            let out = snapshots[n - 1].clone().push_frames(&tail).unwrap();
            let want = reference.slice_rows((n - 1) * c..n * c);
            changed += usize::from(!same_bits(out.as_slice(), want.as_slice()));
        }

        // Control: the last right-context frame does reach the output.
        let mut tail = frames.slice_rows(context_end(2) - 1..context_end(2));
        tail.set(0, 0, 25.0);
        let out = snapshots[1].clone().push_frames(&tail).unwrap();
        let sensitive = !same_bits(out.as_slice(), reference.slice_rows(c..2 * c).as_slice());

        ok &= changed == 0 && sensitive;
        details.push(format!(
            "{layers} layers: {changed}/200 changed, right context {}",
            if sensitive { "visible" } else { "NOT visible" }
        ));
    }
    outcome(ok, details.join("; "))
}

// -------------------------------------------------------------- chunking

fn chunking() -> Outcome {
    let enc = Encoder::random(EncoderConfig::toy(64, 2), 5).unwrap();
    let mut rng = SeededRng::new(55);
    let mut differ = 0;
    let mut frames_out = 0;
    for u in 0..50 {
        let len = rng.range(50, 1001);
        let feats = synth_features(1000 + u, len).unwrap();

        let mut whole = StreamSession::new(&enc);
        let mut a = whole.push_features(&feats).unwrap().into_vec();
        a.extend(whole.finalize().unwrap().into_vec());

        let mut step = StreamSession::new(&enc);
        let mut b = Vec::new();
        for t in 0..len {
            b.extend(
                step.push_features(&feats.slice_rows(t..t + 1))
                    .unwrap()
                    .into_vec(),
            );
        }
        b.extend(step.finalize().unwrap().into_vec());

        frames_out += a.len() / 64;
        differ += usize::from(!same_bits(&a, &b) || a.len() != len.div_ceil(4) * 64);
    }
    outcome(
        differ == 0,
        format!("{differ}/50 utterances differ, {frames_out} frames compared"),
    )
}

// ---------------------------------------------------------------- memory

fn memory() -> Outcome {
    let seg = SegmenterConfig::default();
    let steady = seg.left + seg.center + seg.right;
    let n_segments = 14;
    let mut ok = steady == 56;
    let mut details = Vec::new();
    for cap in [None, Some(0usize), Some(10)] {
        let limit = |m: usize| cap.map_or(m, |k| m.min(k));
        let label = cap.map_or("unset".to_owned(), |k| k.to_string());

        let mut cmd = bin();
        cmd.args([
            "bench",
            "--segments",
            &n_segments.to_string(),
            "--dim",
            "64",
            "--layers",
            "2",
        ]);
        if let Some(k) = cap {
            cmd.args(["--memory-cap", &k.to_string()]);
        }
        let out = cmd.output().unwrap();
        let csv = String::from_utf8(out.stdout).unwrap();
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let (ki, si, ni) = (col("key_rows"), col("memory_slots"), col("segment"));
        let mut steady_ok = true;
        let mut first_keys = 0;
        let mut rows = 0;
        for line in lines {
            let f: Vec<usize> = line.split(',').map(|x| x.parse().unwrap()).collect();
            let n = f[ni];
            rows += 1;
            steady_ok &= f[si] == limit(n - 1);
            if n == 1 {
                first_keys = f[ki];
            } else {
                steady_ok &= f[ki] == limit(n - 1) + 56;
            }
        }
        // The first segment has no left context to attend to.
        let first_ok = first_keys == seg.center + seg.right;

        let enc = Encoder::random(
            EncoderConfig {
                memory_cap: cap,
                ..EncoderConfig::toy(64, 3)
            },
            9,
        )
        .unwrap();
        let mut stream = SegmentStream::new(&enc);
        let mut rng = SeededRng::new(3);
        stream
            .push_frames(&rng.uniform_matrix(seg.right, 64, -1.0, 1.0))
            .unwrap();
        let mut banks_ok = true;
        for n in 1..=n_segments {
            stream
                .push_frames(&rng.uniform_matrix(seg.center, 64, -1.0, 1.0))
                .unwrap();
            banks_ok &=
                stream.banks().len() == 3 && stream.banks().iter().all(|b| b.len() == limit(n));
        }

        ok &= out.status.success() && rows == n_segments && steady_ok && first_ok && banks_ok;
        details.push(format!(
            "cap {label}: slots {}, keys(n>=2) {}, keys(1) = {first_keys}",
            if banks_ok { "ok" } else { "WRONG" },
            if steady_ok { "ok" } else { "WRONG" },
        ));
    }
    outcome(ok, details.join("; "))
}

// ----------------------------------------------------------------- dense

/// Textbook multi-head attention in f64 with per-head relative bias.
fn dense_attention(x: &Matrix, w: &AttentionWeights) -> Vec<Vec<f64>> {
    let (n, d) = x.shape();
    let hd = d / w.heads;
    let affine = |m: &Matrix, b: &Matrix, v: &[f64]| -> Vec<f64> {
        (0..m.rows())
            .map(|o| {
                f64::from(b.get(0, o))
                    + (0..v.len())
                        .map(|i| f64::from(m.get(o, i)) * v[i])
                        .sum::<f64>()
            })
            .collect()
    };
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| x.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let q: Vec<_> = xs.iter().map(|r| affine(&w.wq, &w.bq, r)).collect();
    let k: Vec<_> = xs.iter().map(|r| affine(&w.wk, &w.bk, r)).collect();
    let v: Vec<_> = xs.iter().map(|r| affine(&w.wv, &w.bv, r)).collect();
    (0..n)
        .map(|i| {
            let mut ctx = vec![0.0; d];
            for h in 0..w.heads {
                let s: Vec<f64> = (0..n)
                    .map(|j| {
                        let rel = (j as i64 - i as i64).clamp(-16, 16);
                        let bias = f64::from(w.position_bias.get(h, (rel + 16) as usize));
                        (h * hd..(h + 1) * hd)
                            .map(|c| q[i][c] * k[j][c])
                            .sum::<f64>()
                            / (hd as f64).sqrt()
                            + bias
                    })
                    .collect();
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (j, ej) in e.iter().enumerate() {
                    for c in h * hd..(h + 1) * hd {
                        ctx[c] += ej / z * v[j][c];
                    }
                }
            }
            affine(&w.wout, &w.bout, &ctx)
        })
        .collect()
}

fn dense() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let heads = [1, 2, 4][case % 3];
        let d = heads * rng.range(2, 9);
        let mut w = AttentionWeights::random(d, heads, &mut rng).unwrap();
        for h in 0..heads {
            for b in 0..NUM_POSITION_BUCKETS {
                w.position_bias.set(h, b, rng.uniform(-1.0, 1.0));
            }
        }
        let (l, c, r) = if case == 0 {
            (16, 32, 8)
        } else {
            (rng.range(0, 17), rng.range(1, 33), rng.range(0, 9))
        };
        let seg = SegmentInput::new(
            &rng.uniform_matrix(l, d, -2.0, 2.0),
            &rng.uniform_matrix(c, d, -2.0, 2.0),
            &rng.uniform_matrix(r, d, -2.0, 2.0),
        )
        .unwrap();
        let out = augmem_layer_forward(
            &seg,
            &mut MemoryBank::new(None),
            &w,
            SuppressionConfig::disabled(),
        )
        .unwrap();
        for (i, row) in dense_attention(seg.stacked(), &w).iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                worst = worst.max((f64::from(out.stacked().get(i, j)) - want).abs());
            }
        }
    }
    outcome(
        worst <= 1e-5,
        format!("max abs error {worst:.2e} over 20 cases"),
    )
}

// ----------------------------------------------------------------- RNN-T

/// Random normalized log-probabilities laid out [t][u][k].
fn random_log_probs(rng: &mut SeededRng, t: usize, u: usize, classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t * (u + 1) * classes);
    for _ in 0..t * (u + 1) {
        let logits: Vec<f64> = (0..classes)
            .map(|_| f64::from(rng.uniform(-4.0, 4.0)))
            .collect();
        let z = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
        out.extend(logits.iter().map(|x| x - z));
    }
    out
}

/// Sums probabilities of every monotonic path from (0, 0) that emits all
/// of `y` and ends with a blank from the last frame.
fn enumerate(lp: &[f64], t_len: usize, y: &[u32], classes: usize, blank: usize) -> (f64, usize) {
    let at = |t: usize, u: usize, k: usize| lp[(t * (y.len() + 1) + u) * classes + k];
    let mut total = 0.0;
    let mut count = 0;
    let mut stack = vec![(0usize, 0usize, 0.0f64)];
    while let Some((t, u, acc)) = stack.pop() {
        if t == t_len - 1 && u == y.len() {
            total += (acc + at(t, u, blank)).exp();
            count += 1;
            continue;
        }
        if t + 1 < t_len {
            stack.push((t + 1, u, acc + at(t, u, blank)));
        }
        if u < y.len() {
            stack.push((t, u + 1, acc + at(t, u, y[u] as usize)));
        }
    }
    (-total.ln(), count)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k)
        .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

fn rnnt_oracle() -> Outcome {
    let v = 4usize;
    let classes = v + 1;
    let blank = v;
    let mut worst = 0.0f64;
    for t in 1..=4 {
        for u in 0..=3 {
            for seed in 0..5 {
                let mut rng = SeededRng::new(1000 * t as u64 + 100 * u as u64 + seed);
                let lp = random_log_probs(&mut rng, t, u, classes);
                let y: Vec<u32> = (0..u).map(|_| rng.range(0, v) as u32).collect();
                let lattice = RnntLattice::new(t, u, classes, blank as u32, lp.clone()).unwrap();
                let dp = rnnt_loss(&lattice, &y).unwrap().loss;
                let (brute, _) = enumerate(&lp, t, &y, classes, blank);
                worst = worst.max((dp - brute).abs());
            }
        }
    }

    let mut closed_worst = 0.0f64;
    let mut counted = Vec::new();
    for t in 1..=4u64 {
        for u in 0..=3u64 {
            let lp = vec![-(classes as f64).ln(); (t * (u + 1)) as usize * classes];
            let lattice =
                RnntLattice::new(t as usize, u as usize, classes, blank as u32, lp.clone())
                    .unwrap();
            let dp = rnnt_loss(&lattice, &vec![0; u as usize]).unwrap().loss;
            let closed = -(ln_choose(t + u, u) - (t + u) as f64 * (classes as f64).ln());
            closed_worst = closed_worst.max((dp - closed).abs());
            let (_, paths) = enumerate(&lp, t as usize, &vec![0; u as usize], classes, blank);
            counted.push((t, u, paths));
        }
    }
    let (t, u, paths) = counted[counted.len() - 1];
    outcome(
        worst <= 1e-6 && closed_worst <= 1e-9,
        format!(
            "dp vs enumeration max diff {worst:.1e}; closed form with C(T+U,U) max diff {closed_worst:.3}; \
             enumeration counts {paths} paths at T={t},U={u} where C(T+U,U)={}",
            ln_choose(t + u, u).exp().round()
        ),
    )
}

fn rnnt_gradient() -> Outcome {
    let mut rng = SeededRng::new(99);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut entries = 0;
    for _ in 0..10 {
        let (t, u, v) = (rng.range(1, 6), rng.range(0, 4), rng.range(2, 5));
        let lp = random_log_probs(&mut rng, t, u, v + 1);
        let y: Vec<u32> = (0..u).map(|_| rng.range(0, v) as u32).collect();
        let base = RnntLattice::new(t, u, v + 1, v as u32, lp.clone()).unwrap();
        let grad = rnnt_loss(&base, &y).unwrap().grad;
        for i in 0..lp.len() {
            let shifted = |delta: f64| {
                let mut p = lp.clone();
                p[i] += delta;
                rnnt_loss(&RnntLattice::new(t, u, v + 1, v as u32, p).unwrap(), &y)
                    .unwrap()
                    .loss
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let scale = fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max((fd - grad[i]).abs() / scale);
            entries += 1;
        }
    }
    outcome(
        worst <= 1e-3,
        format!("max relative error {worst:.2e} over {entries} entries"),
    )
}

// --------------------------------------------------------------- decoder

/// Two tokens after "a" are nearly tied; "c" edges out "b" acoustically.
struct NearTie;

impl JointModel for NearTie {
    type State = usize;

    fn vocab_size(&self) -> usize {
        3
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn advance(&self, emitted: &usize, _token: u32) -> streamformer_core::Result<usize> {
        Ok(emitted + 1)
    }

    fn log_probs(&self, _frame: &[f32], emitted: &usize) -> streamformer_core::Result<Vec<f64>> {
        let p = match emitted {
            0 => [0.9, 0.04, 0.04, 0.02],
            1 => [0.02, 0.47, 0.49, 0.02],
            _ => [0.1, 0.1, 0.1, 0.7],
        };
        Ok(p.iter().map(|x: &f64| x.ln()).collect())
    }
}

fn toy_spec() -> ModelSpec {
    ModelSpec {
        num_layers: 2,
        dim: 32,
        vgg_channels: [4, 8],
        vocab_size: 24,
        embed_dim: 16,
        predictor_hidden: 24,
        joint_dim: 24,
        ..ModelSpec::preset(VariantName::Conformer, SizeName::Small)
    }
}

fn decoder() -> Outcome {
    let model = Model::random(toy_spec(), &Runtime::default(), 11).unwrap();
    let lm = CountBigramLm::from_sentences(24, &[vec![1, 2, 3, 4], vec![4, 3, 2], vec![5, 5, 5]]);
    let (mut greedy_diff, mut fusion_diff, mut emitted) = (0, 0, 0);
    for u in 0..20 {
        let feats = synth_features(500 + u, 60 + 17 * u as usize).unwrap();
        let frames = encode(&model, &feats).unwrap();
        let g = greedy_decode(&model.transducer, &frames, 8).unwrap();
        emitted += g.tokens.len();
        let narrow = BeamConfig {
            beam: 1,
            max_symbols_per_frame: 8,
            fusion: Some(Fusion {
                lm: &lm,
                weight: 0.0,
            }),
        };
        let b = beam_decode(&model.transducer, &frames, &narrow).unwrap();
        greedy_diff +=
            usize::from(b[0].tokens != g.tokens || b[0].score.to_bits() != g.score.to_bits());

        let plain = BeamConfig {
            beam: 4,
            max_symbols_per_frame: 8,
            fusion: None,
        };
        let fused = BeamConfig {
            fusion: Some(Fusion {
                lm: &lm,
                weight: 0.0,
            }),
            ..plain
        };
        let a: Vec<_> = beam_decode(&model.transducer, &frames, &plain).unwrap();
        let f: Vec<_> = beam_decode(&model.transducer, &frames, &fused).unwrap();
        let same = a.len() == f.len()
            && a.iter()
                .zip(&f)
                .all(|(x, y)| x.tokens == y.tokens && x.score.to_bits() == y.score.to_bits());
        fusion_diff += usize::from(!same);
    }

    let frame = Matrix::zeros(1, 1);
    let biased = CountBigramLm::from_sentences(3, &[vec![0, 1], vec![0, 1], vec![0, 1]]);
    let search = |fusion| {
        let cfg = BeamConfig {
            beam: 4,
            max_symbols_per_frame: 3,
            fusion,
        };
        beam_decode(&NearTie, &frame, &cfg)
            .unwrap()
            .remove(0)
            .tokens
    };
    let before = search(None);
    let after = search(Some(Fusion {
        lm: &biased,
        weight: 1.0,
    }));
    let flips = before == [0, 2] && after == [0, 1];

    // The same equivalence through the command line.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"dim": 32, "num_layers": 2, "vgg_channels": [4, 8], "vocab_size": 24}, "seed": 3}"#,
    )
    .unwrap();
    let run = |extra: &[&str]| {
        let out = bin()
            .args([
                "decode",
                "--config",
                cfg.to_str().unwrap(),
                "--features",
                "synth:8:200",
                "--features",
                "synth:9:90",
            ])
            .args(extra)
            .output()
            .unwrap();
        (out.status.success(), out.stdout)
    };
    let greedy_cli = run(&[]);
    let beam_cli = run(&["--beam", "1", "--lambda", "0"]);
    let cli_same = greedy_cli.0 && greedy_cli == beam_cli;

    outcome(
        greedy_diff == 0 && fusion_diff == 0 && flips && cli_same,
        format!(
            "beam1 vs greedy {greedy_diff}/20 differ ({emitted} tokens), zero-weight fusion {fusion_diff}/20 differ, \
             tie {before:?} -> {after:?}, cli beam1 == greedy: {cli_same}"
        ),
    )
}

// ------------------------------------------------------------- subsample

fn subsample() -> Outcome {
    let mut rng = SeededRng::new(4);
    let shape = VggShape {
        bins: 80,
        channels: [4, 8],
        dim: 8,
    };
    let weights = VggWeights::init(
        shape,
        &mut Init::Uniform {
            rng: &mut rng,
            scale: INIT_SCALE,
        },
    );
    let feats = rng.uniform_matrix(1000, 80, -1.0, 1.0);
    let law = |t: usize| t.div_ceil(2).div_ceil(2);
    let mut wrong = Vec::new();

    // Streaming: finishing a copy after every frame gives the length of
    // each prefix.
    let mut fe = FrontEnd::new(shape);
    let mut emitted = 0;
    for t in 1..=1000 {
        emitted += fe.push(&weights, feats.row(t - 1)).unwrap().len();
        let total = emitted + fe.clone().finish(&weights).unwrap().len();
        if total != law(t) || subsampled_len(t) != law(t) || law(t) != t.div_ceil(4) {
            wrong.push(t);
        }
    }

    // Whole-utterance path on a narrow frequency axis.
    let narrow = VggShape {
        bins: 4,
        channels: [1, 2],
        dim: 2,
    };
    let nw = VggWeights::init(
        narrow,
        &mut Init::Uniform {
            rng: &mut rng,
            scale: INIT_SCALE,
        },
    );
    let nf = rng.uniform_matrix(1000, 4, -1.0, 1.0);
    for t in 1..=1000 {
        if vgg_subsample(&nf.slice_rows(0..t), &nw, narrow)
            .unwrap()
            .rows()
            != law(t)
        {
            wrong.push(t);
        }
    }
    outcome(
        wrong.is_empty(),
        format!("{} of 2000 lengths wrong", wrong.len()),
    )
}

fn main() {
    let results = [
        criterion(1, "parameter count", secs(1), params),
        criterion(2, "lookahead", secs(1), lookahead),
        criterion(3, "weak-attention", secs(5), was),
        criterion(4, "causality", secs(60), causality),
        criterion(5, "chunk invariance", secs(60), chunking),
        criterion(6, "memory bank", secs(30), memory),
        criterion(7, "dense equivalence", secs(10), dense),
        criterion(8, "rnnt oracle", secs(10), rnnt_oracle),
        criterion(9, "rnnt gradient", secs(10), rnnt_gradient),
        criterion(10, "decoder sanity", secs(10), decoder),
        criterion(11, "subsampling", secs(5), subsample),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
