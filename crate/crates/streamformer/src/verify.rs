//! Self-check suites behind `streamformer verify`.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use streamformer_core::attention::{
    augmem_layer_forward, position_bucket, suppression_threshold, weak_attention_suppress,
    AttentionWeights, MemoryBank, RowKind, SegmentInput, SuppressionConfig,
};
use streamformer_core::encoder::vgg::{
    subsampled_len, vgg_subsample, FrontEnd, VggShape, VggWeights,
};
use streamformer_core::encoder::{Encoder, EncoderConfig};
use streamformer_core::params::{Init, INIT_SCALE};
use streamformer_core::rng::{synth_features, SeededRng};
use streamformer_core::stream::{lookahead_ms, SegmentStream, SegmenterConfig, StreamSession};
use streamformer_core::tensor::log_softmax;
use streamformer_core::transducer::{
    beam_decode, greedy_decode, rnnt_loss, BeamConfig, CountBigramLm, Fusion, JointModel,
    RnntLattice, Transducer, TransducerConfig, Vocab,
};
use streamformer_core::{Matrix, Result as CoreResult};

use crate::error::{Error, Result};
use crate::model::{param_count, ModelSpec, SizeName, VariantName};

pub const SUITES: &[&str] = &[
    "params",
    "lookahead",
    "was",
    "causality",
    "chunking",
    "memory",
    "dense",
    "rnnt",
    "decoder",
    "subsample",
];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub elapsed_ms: u128,
    pub checks: Vec<Check>,
}

struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Runs a suite by name; `None` for an unknown name.
pub fn run_suite(name: &str, seed: u64) -> Option<Result<SuiteReport>> {
    let start = Instant::now();
    let mut c = Checks(Vec::new());
    let outcome = match name {
        "params" => params(&mut c),
        "lookahead" => lookahead(&mut c),
        "was" => was(&mut c, seed),
        "causality" => causality(&mut c, seed),
        "chunking" => chunking(&mut c, seed),
        "memory" => memory(&mut c, seed),
        "dense" => dense(&mut c, seed),
        "rnnt" => rnnt(&mut c, seed),
        "decoder" => decoder(&mut c, seed),
        "subsample" => subsample(&mut c),
        _ => return None,
    };
    Some(outcome.map(|()| SuiteReport {
        suite: name.to_owned(),
        passed: c.0.iter().all(|k| k.passed),
        elapsed_ms: start.elapsed().as_millis(),
        checks: c.0,
    }))
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn params(c: &mut Checks) -> Result<()> {
    let cs = param_count(&ModelSpec::preset(VariantName::Conformer, SizeName::Small))?;
    let cm = param_count(&ModelSpec::preset(VariantName::Conformer, SizeName::Medium))?;
    let ts = param_count(&ModelSpec::preset(
        VariantName::Transformer,
        SizeName::Small,
    ))?;
    c.add(
        "conformer_s_within_10pct_of_10.3M",
        within(cs as f64, 10.3e6, 0.1),
        format!("{cs}"),
    );
    c.add(
        "conformer_m_within_10pct_of_27.9M",
        within(cm as f64, 27.9e6, 0.1),
        format!("{cm}"),
    );
    c.add(
        "transformer_s_within_10pct_of_conformer_s",
        within(ts as f64, cs as f64, 0.1),
        format!("{ts} vs {cs}"),
    );
    Ok(())
}

fn lookahead(c: &mut Checks) -> Result<()> {
    let ms = lookahead_ms(&SegmenterConfig::default());
    c.add("default_is_320ms", ms == 320.0, format!("{ms}"));
    let r0 = lookahead_ms(&SegmenterConfig {
        right: 0,
        ..Default::default()
    });
    c.add("no_right_context_is_0ms", r0 == 0.0, format!("{r0}"));
    Ok(())
}

/// Softmax of random logits with a random temperature.
fn random_probs(rng: &mut SeededRng, n: usize) -> Vec<f32> {
    let spread = rng.uniform(0.1, 8.0);
    let logits: Vec<f32> = (0..n).map(|_| rng.uniform(-spread, spread)).collect();
    log_softmax(&logits)
        .into_iter()
        .map(|x| x.exp() as f32)
        .collect()
}

fn was(c: &mut Checks, seed: u64) -> Result<()> {
    let gammas = [0.0f32, 0.25, 0.5, 1.0];
    let mut rng = SeededRng::new(seed);
    let (mut sum_fail, mut zero_fail, mut argmax_fail, mut mono_fail) = (0, 0, 0, 0);
    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        let n = rng.range(2, 513);
        let p = random_probs(&mut rng, n);
        let argmax = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        let mut prev: Option<Vec<bool>> = None;
        for &g in &gammas {
            let out = weak_attention_suppress(&p, g);
            let theta = suppression_threshold(&p, g);
            let sum: f64 = out.iter().map(|&x| f64::from(x)).sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
            sum_fail += usize::from((sum - 1.0).abs() > 1e-6);
            zero_fail += p
                .iter()
                .zip(&out)
                .filter(|(&a, &b)| f64::from(a) < theta && b != 0.0)
                .count();
            argmax_fail += usize::from(out[argmax] == 0.0);
            let kept: Vec<bool> = out.iter().map(|&x| x != 0.0).collect();
            if let Some(prev) = &prev {
                // a larger gamma lowers the threshold, so survivors only grow
                mono_fail += usize::from(prev.iter().zip(&kept).any(|(&a, &b)| a && !b));
            }
            prev = Some(kept);
        }
    }
    c.add(
        "sums_to_one",
        sum_fail == 0,
        format!("worst |sum-1| = {worst_sum:.2e}"),
    );
    c.add(
        "suppressed_entries_zero",
        zero_fail == 0,
        format!("{zero_fail} violations"),
    );
    c.add(
        "argmax_survives",
        argmax_fail == 0,
        format!("{argmax_fail} violations"),
    );
    c.add(
        "gamma_monotone",
        mono_fail == 0,
        format!("{mono_fail} violations"),
    );
    for v in shipped_vectors()? {
        let out = weak_attention_suppress(&v.probs, v.gamma);
        let ok = out.len() == v.expected.len()
            && out
                .iter()
                .zip(&v.expected)
                .all(|(a, b)| (a - b).abs() <= 1e-5);
        c.add(&format!("vector_{}", v.name), ok, format!("{out:?}"));
    }
    Ok(())
}

#[derive(Deserialize)]
struct WasVector {
    name: String,
    probs: Vec<f32>,
    gamma: f32,
    expected: Vec<f32>,
}

fn shipped_vectors() -> Result<Vec<WasVector>> {
    serde_json::from_str(include_str!("../data/was_vectors.json"))
        .map_err(|e| Error::malformed("was_vectors.json", e.to_string()))
}

fn toy_encoder(layers: usize, seed: u64) -> CoreResult<Encoder> {
    Encoder::random(EncoderConfig::toy(64, layers), seed)
}

/// Perturbs encoder frames past segment `n`'s right context and checks its
/// outputs are unchanged. Returns the number of failing trials.
pub fn causality_trials(encoder: &Encoder, trials: usize, seed: u64) -> CoreResult<usize> {
    let seg = encoder.config().segmenter;
    let dim = encoder.config().dim;
    let mut rng = SeededRng::new(seed);
    let total = seg.right + 4 * seg.center + seg.center;
    let frames = rng.uniform_matrix(total, dim, -1.0, 1.0);

    let mut reference = SegmentStream::new(encoder);
    let mut outputs = Vec::new();
    for t in 0..total {
        let out = reference.push_frames(&frames.slice_rows(t..t + 1))?;
        if out.rows() > 0 {
            outputs.push(out);
        }
    }
    let stats = reference.stats().to_vec();

    // Stream state one frame short of each segment's context end.
    let snapshots = (0..4)
        .map(|n| {
            let mut s = SegmentStream::new(encoder);
            s.push_frames(&frames.slice_rows(0..stats[n].context_end() - 1))?;
            Ok(s)
        })
        .collect::<CoreResult<Vec<_>>>()?;

    let mut failures = 0;
    for _ in 0..trials {
        let n = rng.range(0, 4);
        let end = stats[n].context_end();
        // Deliver the last frame segment n needs together with perturbed
        // frames beyond it.
        let mut stream = snapshots[n].clone();
        let upto = (end + seg.center - 1).min(total);
        let mut tail = frames.slice_rows(end - 1..upto);
        let count = rng.range(1, upto - end + 1);
        for _ in 0..count {
            let row = rng.range(1, tail.rows());
            for x in tail.row_mut(row) {
                *x = rng.uniform(-100.0, 100.0);
            }
        }
        let out = stream.push_frames(&tail)?;
        let same = out.rows() == outputs[n].rows()
            && out
                .as_slice()
                .iter()
                .zip(outputs[n].as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        failures += usize::from(!same);
    }
    Ok(failures)
}

fn causality(c: &mut Checks, seed: u64) -> Result<()> {
    for layers in [1, 4, 16] {
        let enc = toy_encoder(layers, seed)?;
        let failures = causality_trials(&enc, 200, seed ^ layers as u64)?;
        c.add(
            &format!("{layers}_layers_unaffected_past_right_context"),
            failures == 0,
            format!("{failures}/200 trials changed"),
        );
    }
    Ok(())
}

/// Streams `features` one frame at a time and all at once; true when the
/// outputs match bit for bit.
pub fn chunk_invariant(encoder: &Encoder, features: &Matrix) -> CoreResult<bool> {
    let mut bulk = StreamSession::new(encoder);
    let head = bulk.push_features(features)?;
    let all = Matrix::vstack(&[&head, &bulk.finalize()?])?;

    let mut single = StreamSession::new(encoder);
    let mut parts = Vec::new();
    for t in 0..features.rows() {
        parts.push(single.push_features(&features.slice_rows(t..t + 1))?);
    }
    parts.push(single.finalize()?);
    let refs: Vec<&Matrix> = parts.iter().collect();
    let incremental = Matrix::vstack(&refs)?;
    Ok(all.shape() == incremental.shape()
        && all
            .as_slice()
            .iter()
            .zip(incremental.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()))
}

fn chunking(c: &mut Checks, seed: u64) -> Result<()> {
    let enc = toy_encoder(2, seed)?;
    let mut rng = SeededRng::new(seed);
    let mut mismatched = 0;
    for u in 0..50 {
        let len = rng.range(50, 1001);
        let feats = synth_features(seed.wrapping_add(u), len)?;
        mismatched += usize::from(!chunk_invariant(&enc, &feats)?);
    }
    c.add(
        "single_frame_pushes_match_bulk",
        mismatched == 0,
        format!("{mismatched}/50 utterances differ"),
    );
    Ok(())
}

fn memory(c: &mut Checks, seed: u64) -> Result<()> {
    for cap in [None, Some(0), Some(10)] {
        let cfg = EncoderConfig {
            memory_cap: cap,
            ..EncoderConfig::toy(16, 2)
        };
        let enc = Encoder::random(cfg, seed)?;
        let rows = crate::bench::bench_segment_costs(&enc, 14, seed)?;
        let seg = cfg.segmenter;
        let label = cap.map_or("unset".to_owned(), |k| k.to_string());
        let mut slot_ok = true;
        let mut key_ok = true;
        for r in &rows {
            let n = r.segment;
            let bound = |m: usize| cap.map_or(m, |k| m.min(k));
            slot_ok &= r.memory_slots == bound(n - 1);
            let left = if n == 1 { 0 } else { seg.left };
            key_ok &= r.key_rows == bound(n - 1) + left + seg.center + seg.right;
        }
        let enc_ref = &enc;
        let mut stream = SegmentStream::new(enc_ref);
        let mut banks_ok = true;
        let mut frng = SeededRng::new(seed);
        stream.push_frames(&frng.uniform_matrix(seg.right, 16, -1.0, 1.0))?;
        for n in 1..=14 {
            stream.push_frames(&frng.uniform_matrix(seg.center, 16, -1.0, 1.0))?;
            let want = cap.map_or(n, |k| n.min(k));
            banks_ok &= stream.banks().iter().all(|b| b.len() == want);
        }
        let keys: Vec<String> = rows.iter().map(|r| r.key_rows.to_string()).collect();
        c.add(
            &format!("cap_{label}_bank_size"),
            banks_ok && slot_ok,
            "min(n, cap) per layer",
        );
        c.add(&format!("cap_{label}_key_rows"), key_ok, keys.join(" "));
    }
    Ok(())
}

/// Plain multi-head attention with relative-position bias over one
/// segment's rows, no memory and no suppression.
fn dense_oracle(x: &Matrix, w: &AttentionWeights) -> Vec<Vec<f64>> {
    let n = x.rows();
    let d = w.dim();
    let hd = w.head_dim();
    let proj = |m: &Matrix, b: &Matrix, row: &[f32]| -> Vec<f64> {
        (0..d)
            .map(|o| {
                m.row(o)
                    .iter()
                    .zip(row)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum::<f64>()
                    + f64::from(b.as_slice()[o])
            })
            .collect()
    };
    let q: Vec<Vec<f64>> = (0..n).map(|i| proj(&w.wq, &w.bq, x.row(i))).collect();
    let k: Vec<Vec<f64>> = (0..n).map(|i| proj(&w.wk, &w.bk, x.row(i))).collect();
    let v: Vec<Vec<f64>> = (0..n).map(|i| proj(&w.wv, &w.bv, x.row(i))).collect();
    let mut ctx = vec![vec![0.0; d]; n];
    for h in 0..w.heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let s: f64 = cols.clone().map(|c| q[i][c] * k[j][c]).sum();
                    let bucket = position_bucket(RowKind::Frame(i), RowKind::Frame(j));
                    s / (hd as f64).sqrt() + f64::from(w.position_bias.get(h, bucket))
                })
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for (j, l) in logits.iter().enumerate() {
                let p = (l - mx).exp() / z;
                for c in cols.clone() {
                    ctx[i][c] += p * v[j][c];
                }
            }
        }
    }
    ctx.iter()
        .map(|row| {
            (0..d)
                .map(|o| {
                    w.wout
                        .row(o)
                        .iter()
                        .zip(row)
                        .map(|(&a, &b)| f64::from(a) * b)
                        .sum::<f64>()
                        + f64::from(w.bout.as_slice()[o])
                })
                .collect()
        })
        .collect()
}

fn dense(c: &mut Checks, seed: u64) -> Result<()> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = 4 * rng.range(2, 9);
        let w = AttentionWeights::random(d, 4, &mut rng)?;
        let (l, ctr, r) = (rng.range(0, 6), rng.range(1, 9), rng.range(0, 5));
        let seg = SegmentInput::new(
            &rng.uniform_matrix(l, d, -1.0, 1.0),
            &rng.uniform_matrix(ctr, d, -1.0, 1.0),
            &rng.uniform_matrix(r, d, -1.0, 1.0),
        )?;
        let mut mem = MemoryBank::new(None);
        let out = augmem_layer_forward(&seg, &mut mem, &w, SuppressionConfig::disabled())?;
        let oracle = dense_oracle(seg.stacked(), &w);
        for (i, row) in oracle.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                worst = worst.max((f64::from(out.stacked().get(i, j)) - want).abs());
            }
        }
    }
    c.add(
        "matches_dense_attention",
        worst <= 1e-5,
        format!("max abs err {worst:.2e}"),
    );
    Ok(())
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn enumerate_paths(l: &RnntLattice, y: &[u32], t: usize, u: usize, acc: f64, out: &mut Vec<f64>) {
    let blank = l.blank() as usize;
    if t + 1 == l.frames() && u == y.len() {
        out.push(acc + l.log_prob(t, u, blank));
        return;
    }
    if t + 1 < l.frames() {
        enumerate_paths(l, y, t + 1, u, acc + l.log_prob(t, u, blank), out);
    }
    if u < y.len() {
        enumerate_paths(l, y, t, u + 1, acc + l.log_prob(t, u, y[u] as usize), out);
    }
}

fn random_lattice(
    rng: &mut SeededRng,
    t: usize,
    u: usize,
    v: usize,
) -> CoreResult<(RnntLattice, Vec<u32>)> {
    let logits: Vec<f32> = (0..t * (u + 1) * (v + 1))
        .map(|_| rng.uniform(-3.0, 3.0))
        .collect();
    let y = (0..u).map(|_| rng.range(0, v) as u32).collect();
    Ok((RnntLattice::from_logits(t, u, v + 1, v as u32, &logits)?, y))
}

fn rnnt(c: &mut Checks, seed: u64) -> Result<()> {
    let v = 4;
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for t in 1..=4 {
        for u in 0..=3 {
            for _ in 0..5 {
                let (l, y) = random_lattice(&mut rng, t, u, v)?;
                let mut paths = Vec::new();
                enumerate_paths(&l, &y, 0, 0, 0.0, &mut paths);
                let brute = -paths.iter().map(|p| p.exp()).sum::<f64>().ln();
                worst = worst.max((rnnt_loss(&l, &y)?.loss - brute).abs());
            }
        }
    }
    c.add(
        "dp_matches_enumeration",
        worst <= 1e-6,
        format!("max |diff| {worst:.2e}"),
    );

    let mut stated_worst = 0.0f64;
    let mut counted_worst = 0.0f64;
    let classes = (v + 1) as f64;
    for t in 1..=4u64 {
        for u in 0..=3u64 {
            let l = RnntLattice::new(
                t as usize,
                u as usize,
                v + 1,
                v as u32,
                vec![-classes.ln(); (t * (u + 1)) as usize * (v + 1)],
            )?;
            let loss = rnnt_loss(&l, &vec![0; u as usize])?.loss;
            let per_step = (t + u) as f64 * classes.ln();
            let stated = -(binomial(t + u, u).ln() - per_step);
            let counted = -(binomial(t + u - 1, u).ln() - per_step);
            stated_worst = stated_worst.max((loss - stated).abs());
            counted_worst = counted_worst.max((loss - counted).abs());
        }
    }
    c.add(
        "uniform_closed_form_binom_t_plus_u",
        stated_worst <= 1e-9,
        format!("max |diff| {stated_worst:.2e}"),
    );
    c.add(
        "uniform_closed_form_binom_t_plus_u_minus_1",
        counted_worst <= 1e-9,
        format!("max |diff| {counted_worst:.2e}"),
    );

    let eps = 1e-4;
    let mut worst_rel = 0.0f64;
    for _ in 0..10 {
        let (t, u) = (rng.range(1, 5), rng.range(0, 4));
        let (l, y) = random_lattice(&mut rng, t, u, 3)?;
        let g = rnnt_loss(&l, &y)?.grad;
        for (i, &gi) in g.iter().enumerate() {
            let mut hi = l.clone();
            hi.log_probs_mut()[i] += eps;
            let mut lo = l.clone();
            lo.log_probs_mut()[i] -= eps;
            let fd = (rnnt_loss(&hi, &y)?.loss - rnnt_loss(&lo, &y)?.loss) / (2.0 * eps);
            let scale = fd.abs().max(gi.abs());
            if scale > 1e-9 {
                worst_rel = worst_rel.max((fd - gi).abs() / scale);
            }
        }
    }
    c.add(
        "gradient_matches_finite_differences",
        worst_rel <= 1e-3,
        format!("max rel err {worst_rel:.2e}"),
    );
    Ok(())
}

/// One frame; after "a" the model slightly prefers "c" over "b".
struct TieModel;

impl JointModel for TieModel {
    type State = usize;

    fn vocab_size(&self) -> usize {
        3
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn advance(&self, state: &usize, _token: u32) -> CoreResult<usize> {
        Ok(state + 1)
    }

    fn log_probs(&self, _frame: &[f32], state: &usize) -> CoreResult<Vec<f64>> {
        let p: &[f64] = match state {
            0 => &[0.9, 0.04, 0.04, 0.02],
            1 => &[0.02, 0.47, 0.49, 0.02],
            _ => &[0.1, 0.1, 0.1, 0.7],
        };
        Ok(p.iter().map(|x| x.ln()).collect())
    }
}

fn decoder(c: &mut Checks, seed: u64) -> Result<()> {
    let cfg = TransducerConfig {
        vocab: Vocab { size: 12 },
        embed_dim: 8,
        hidden: 8,
        joint_dim: 8,
        encoder_dim: 8,
    };
    let mut rng = SeededRng::new(seed);
    let model = Transducer::init(
        cfg,
        &mut Init::Uniform {
            rng: &mut rng,
            scale: 10.0 * INIT_SCALE,
        },
    );
    let lm = CountBigramLm::from_sentences(12, &[vec![1, 2, 3], vec![3, 2, 1, 0]]);
    let (mut greedy_mismatch, mut fusion_mismatch) = (0, 0);
    for _ in 0..20 {
        let t = rng.range(1, 30);
        let frames = rng.uniform_matrix(t, 8, -3.0, 3.0);
        let g = greedy_decode(&model, &frames, 8)?;
        let one = BeamConfig {
            beam: 1,
            ..Default::default()
        };
        let b = beam_decode(&model, &frames, &one)?;
        greedy_mismatch += usize::from(b[0].tokens != g.tokens || b[0].score != g.score);
        let four = BeamConfig {
            beam: 4,
            ..Default::default()
        };
        let fused = BeamConfig {
            fusion: Some(Fusion {
                lm: &lm,
                weight: 0.0,
            }),
            ..four
        };
        let plain: Vec<_> = beam_decode(&model, &frames, &four)?
            .into_iter()
            .map(|h| (h.tokens, h.score))
            .collect();
        let zero: Vec<_> = beam_decode(&model, &frames, &fused)?
            .into_iter()
            .map(|h| (h.tokens, h.score))
            .collect();
        fusion_mismatch += usize::from(plain != zero);
    }
    c.add(
        "beam1_equals_greedy",
        greedy_mismatch == 0,
        format!("{greedy_mismatch}/20 differ"),
    );
    c.add(
        "zero_weight_fusion_is_plain",
        fusion_mismatch == 0,
        format!("{fusion_mismatch}/20 differ"),
    );

    let frame = Matrix::zeros(1, 1);
    let ab = CountBigramLm::from_sentences(3, &[vec![0, 1], vec![0, 1], vec![0, 1]]);
    let run = |fusion| -> CoreResult<Vec<u32>> {
        let cfg = BeamConfig {
            beam: 4,
            max_symbols_per_frame: 3,
            fusion,
        };
        Ok(beam_decode(&TieModel, &frame, &cfg)?.swap_remove(0).tokens)
    };
    let before = run(None)?;
    let after = run(Some(Fusion {
        lm: &ab,
        weight: 1.0,
    }))?;
    c.add(
        "biased_lm_flips_tie",
        before == [0, 2] && after == [0, 1],
        format!("{before:?} -> {after:?}"),
    );
    Ok(())
}

/// Output length of the streaming front-end after `t` raw frames and a
/// flush, for every `t` up to `max_frames`.
pub fn streaming_subsampled_lens(
    shape: VggShape,
    max_frames: usize,
    seed: u64,
) -> CoreResult<Vec<usize>> {
    let mut rng = SeededRng::new(seed);
    let weights = VggWeights::init(
        shape,
        &mut Init::Uniform {
            rng: &mut rng,
            scale: INIT_SCALE,
        },
    );
    let feats = rng.uniform_matrix(max_frames, shape.bins, -1.0, 1.0);
    let mut fe = FrontEnd::new(shape);
    let mut emitted = 0;
    let mut lens = Vec::with_capacity(max_frames);
    for t in 0..max_frames {
        emitted += fe.push(&weights, feats.row(t))?.len();
        lens.push(emitted + fe.clone().finish(&weights)?.len());
    }
    Ok(lens)
}

fn subsample(c: &mut Checks) -> Result<()> {
    let law = |t: usize| t.div_ceil(2).div_ceil(2);
    let shape = VggShape {
        bins: 80,
        channels: [4, 8],
        dim: 16,
    };
    let lens = streaming_subsampled_lens(shape, 1000, 0)?;
    let bad = (1..=1000)
        .filter(|&t| lens[t - 1] != law(t) || subsampled_len(t) != law(t))
        .count();
    c.add(
        "streaming_length_law_1_to_1000",
        bad == 0,
        format!("{bad} lengths wrong"),
    );

    // The whole-utterance path, on a narrow frequency axis to keep it quick;
    // lengths depend only on the time axis.
    let narrow = VggShape {
        bins: 8,
        channels: [1, 1],
        dim: 2,
    };
    let mut rng = SeededRng::new(1);
    let weights = VggWeights::init(
        narrow,
        &mut Init::Uniform {
            rng: &mut rng,
            scale: INIT_SCALE,
        },
    );
    let feats = rng.uniform_matrix(1000, narrow.bins, -1.0, 1.0);
    let mut bad = 0;
    for t in 1..=1000usize {
        bad +=
            usize::from(vgg_subsample(&feats.slice_rows(0..t), &weights, narrow)?.rows() != law(t));
    }
    c.add(
        "batch_length_law_1_to_1000",
        bad == 0,
        format!("{bad} lengths wrong"),
    );
    Ok(())
}
