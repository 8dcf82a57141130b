use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sparse_diarize::metrics::{self, emit_rttm, parse_rttm_files, CorpusSummary, LabeledTimeline, Summary};
use sparse_diarize::optimizer::{self, BasisProjection, IterationView};
use sparse_diarize::spectrum::KNEE_HEAD_LEN;
use sparse_diarize::{
    decode_factorization, estimate_max_speakers, load_signal, save_signal, simulate as run_simulation,
    write_file_atomic, DecodeParams, Hyperparams, ShrinkStep, SignalFormat, SimScenario,
};

use crate::{
    file_stem, DecodeArgs, DiarizeArgs, Failure, FormatArg, HyperArgs, ProjectionArg, ShrinkArg, SimulateArgs,
};

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: Failure::IO,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn estimate_k(path: &Path, sensitivity: f64) -> Result<(), Failure> {
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(Failure::usage(format!("sensitivity must be > 0, got {sensitivity}")));
    }
    let signal = load_signal(path).map_err(|e| with_path(e, path))?;
    let report = estimate_max_speakers(&signal, sensitivity)?;
    let head = &report.singular_values[..report.singular_values.len().min(KNEE_HEAD_LEN)];
    let values: Vec<String> = head.iter().map(|v| format!("{v:.9}")).collect();
    println!("singular_values={}", values.join(","));
    println!("knee={}", report.knee_index);
    println!("k_max={}", report.k_max);
    Ok(())
}

fn hyperparams(h: &HyperArgs) -> Hyperparams {
    Hyperparams {
        lambda1: h.lambda1,
        lambda2: h.lambda2,
        lambda3: h.lambda3,
        lr_psi: h.lr_psi,
        lr_a: h.lr_a,
        max_iters: h.max_iters,
        rel_tol: h.rel_tol,
        patience: h.patience,
        seed: h.seed,
        restarts: h.restarts,
        basis_projection: match h.basis_projection {
            ProjectionArg::Disk => BasisProjection::Disk,
            ProjectionArg::Normalize => BasisProjection::Normalize,
        },
        shrink_step: match h.shrink_step {
            ShrinkArg::Preconditioned => ShrinkStep::Preconditioned,
            ShrinkArg::Nominal => ShrinkStep::Nominal,
        },
    }
}

fn decode_params(d: &DecodeArgs) -> DecodeParams {
    DecodeParams {
        threshold: d.threshold,
        min_segment_steps: d.min_segment_steps,
        min_fraction: d.min_fraction,
        merge_cosine: d.merge_cosine,
    }
}

/// `out.rttm` -> `out.loss.csv`
pub fn loss_trace_path(rttm: &Path) -> PathBuf {
    rttm.with_extension("loss.csv")
}

pub fn diarize(args: &DiarizeArgs) -> Result<(), Failure> {
    let hp = hyperparams(&args.hyper);
    hp.validate()?;
    let params = decode_params(&args.decode);
    params.validate()?;
    if !(args.sensitivity.is_finite() && args.sensitivity > 0.0) {
        return Err(Failure::usage(format!(
            "sensitivity must be > 0, got {}",
            args.sensitivity
        )));
    }

    let signal = load_signal(&args.signal).map_err(|e| with_path(e, &args.signal))?;
    let k = match args.k {
        Some(k) => k as usize,
        None => {
            let report = estimate_max_speakers(&signal, args.sensitivity)?;
            eprintln!("estimated knee={} k_max={}", report.knee_index, report.k_max);
            report.k_max
        }
    };

    let every = args.progress_every;
    let fit = optimizer::factorize_with(&signal, k, &hp, |v: &IterationView<'_>| {
        if every > 0 && v.iteration.is_multiple_of(every) {
            eprintln!("restart {} iter {} loss {:.6}", v.restart, v.iteration, v.loss.total);
        }
    })?;
    let diarization = decode_factorization(&fit, &signal.grid(), &params)?;

    let file_id = args.file_id.clone().unwrap_or_else(|| file_stem(&args.signal));
    let text = emit_rttm(&diarization.to_timeline(), &file_id);
    write_file_atomic(&loss_trace_path(&args.out), fit.trace_csv().as_bytes())?;
    write_file_atomic(&args.out, text.as_bytes())?;

    let last = fit.final_loss();
    println!("k={k}");
    println!("speakers={}", diarization.speakers().len());
    println!("segments={}", diarization.segments.len());
    println!("restart={}", fit.restart);
    println!("iterations={}", fit.iterations);
    println!("converged={}", fit.converged);
    println!("initial_loss={:.6}", fit.initial_loss().total);
    println!("final_loss={:.6}", last.total);
    Ok(())
}

fn summary_lines(out: &mut String, prefix: &str, s: &Summary) {
    let _ = writeln!(out, "{prefix}der={:.6}", s.der);
    let _ = writeln!(out, "{prefix}false_alarm={:.6}", s.false_alarm_seconds);
    let _ = writeln!(out, "{prefix}missed={:.6}", s.missed_seconds);
    let _ = writeln!(out, "{prefix}confusion={:.6}", s.confusion_seconds);
    let _ = writeln!(out, "{prefix}purity={:.6}", s.purity);
    let _ = writeln!(out, "{prefix}coverage={:.6}", s.coverage);
    let _ = writeln!(out, "{prefix}f_score={:.6}", s.f_score);
}

fn csv_row(out: &mut String, scope: &str, s: &Summary) {
    let _ = writeln!(
        out,
        "{scope},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        s.der, s.false_alarm_seconds, s.missed_seconds, s.confusion_seconds, s.purity, s.coverage, s.f_score
    );
}

/// Report text for `eval`: micro key=value lines, macro ones prefixed
/// `macro_`, then a CSV block with one row per file plus both aggregates.
pub fn eval_report(files: &[(String, Summary)], corpus: &CorpusSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "files={}", corpus.files);
    summary_lines(&mut out, "", &corpus.micro);
    summary_lines(&mut out, "macro_", &corpus.macro_);
    out.push('\n');
    out.push_str("scope,der,false_alarm,missed,confusion,purity,coverage,f_score\n");
    for (id, s) in files {
        csv_row(&mut out, &format!("file:{id}"), s);
    }
    csv_row(&mut out, "micro", &corpus.micro);
    csv_row(&mut out, "macro", &corpus.macro_);
    out
}

pub fn eval(reference: &Path, hypothesis: &Path, duration: Option<f64>, collar: f64) -> Result<(), Failure> {
    if !(collar.is_finite() && collar >= 0.0) {
        return Err(Failure::usage(format!("collar must be >= 0, got {collar}")));
    }
    if let Some(d) = duration {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Failure::usage(format!("duration must be >= 0, got {d}")));
        }
    }
    let refs = parse_rttm_files(&read_text(reference)?).map_err(|e| with_path(e, reference))?;
    let hyps = parse_rttm_files(&read_text(hypothesis)?).map_err(|e| with_path(e, hypothesis))?;

    let ids: BTreeSet<&String> = refs.keys().chain(hyps.keys()).collect();
    let empty = LabeledTimeline::empty(0.0);
    let mut per_file = Vec::new();
    let mut scores = Vec::new();
    for id in ids {
        let r = refs.get(id).unwrap_or(&empty);
        let h = hyps.get(id).unwrap_or(&empty);
        let span = duration.unwrap_or_else(|| r.last_end().max(h.last_end()));
        let score = metrics::score(&r.with_total_duration(span), &h.with_total_duration(span), collar)?;
        per_file.push((id.clone(), Summary::from(&score)));
        scores.push(score);
    }
    let corpus = metrics::aggregate(&scores).unwrap_or_else(|| {
        // nothing on either side: a perfect, empty match
        let s = Summary::from(&metrics::score(&empty, &empty, collar).expect("empty timelines score"));
        CorpusSummary {
            files: 0,
            micro: s,
            macro_: s,
        }
    });
    print!("{}", eval_report(&per_file, &corpus));
    Ok(())
}

fn with_path(e: sparse_diarize::Error, path: &Path) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn scenario(args: &SimulateArgs) -> Result<SimScenario, Failure> {
    let mut sc = SimScenario::default();
    if let Some(path) = &args.config {
        sc = sc.apply_config(&read_text(path)?).map_err(|e| with_path(e, path))?;
    }
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { sc.$field = v; })*
        };
    }
    take!(
        num_speakers,
        embedding_dim,
        num_steps,
        step_seconds,
        window_seconds,
        mean_turn_steps,
        overlap_fraction,
        silence_fraction,
        noise_sigma,
        seed,
        orthogonal,
        mix_weight
    );
    Ok(sc)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let sc = scenario(args)?;
    let sim = run_simulation(&sc)?;
    let (format, ext) = match args.format {
        FormatArg::Embsig => (SignalFormat::Binary, ".embsig"),
        FormatArg::Csv => (SignalFormat::Csv, ".csv"),
    };
    let signal_path = with_suffix(&args.prefix, ext);
    let rttm_path = with_suffix(&args.prefix, ".rttm");
    let file_id = file_stem(&rttm_path);
    save_signal(&sim.signal, &signal_path, format)?;
    write_file_atomic(&rttm_path, emit_rttm(&sim.reference.to_timeline(), &file_id).as_bytes())?;

    println!("signal={}", signal_path.display());
    println!("rttm={}", rttm_path.display());
    println!("speakers={}", sc.num_speakers);
    println!("dim={}", sim.signal.dim());
    println!("steps={}", sim.signal.len());
    println!("speech_steps={}", sim.signal.speech_steps());
    println!("overlap_steps={}", sim.overlap_steps.len());
    println!("duration={:.3}", sim.signal.grid().timeline_seconds());
    Ok(())
}
