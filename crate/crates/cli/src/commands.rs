use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use moqsdc::coding::{bits, CodingError};
use moqsdc::coding::frame_file::{hex_dump, FrameFile};
use moqsdc::model::ChannelParams;
use moqsdc::rate::{self, SweepOptions, SweepRow, DEFAULT_TARGET_FAILURE};
use moqsdc::sim::{self, frame::Link, SimConfig, SimError};
use serde::Serialize;
use serde_json::json;

use crate::output::{emit, load_params, resolve_seed, write_file, RunManifest};
use crate::{Common, Failure, Format, Range};

fn lib<E: std::error::Error + Send + Sync + 'static>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn sweep_rows(
    params: &ChannelParams,
    range: &Range,
    xbasis: Option<(u64, f64)>,
) -> Result<Vec<SweepRow>, Failure> {
    let ds = rate::distance_grid(range.d_min, range.d_max, range.d_step).map_err(lib)?;
    let mut opts = if range.optimize_mu {
        SweepOptions::optimized()
    } else {
        SweepOptions::fixed(params.mu)
    };
    opts.xbasis = xbasis;
    rate::sweep(params, &ds, &opts).map_err(lib)
}

pub fn rate_sweep(common: &Common, range: &Range) -> Result<(), Failure> {
    let params = load_params(common)?;
    let rows = sweep_rows(&params, range, None)?;
    let manifest = RunManifest::new("rate-sweep", common, common.seed);
    emit(common, Format::Csv, &manifest, json!({ "rows": rows }), |buf| {
        rate::write_sweep_csv(buf, &rows)?;
        Ok(())
    })
}

#[derive(Debug, Serialize)]
struct XRow {
    t: u64,
    d_km: f64,
    mu: f64,
    q: f64,
    p_event: f64,
    pr_x: f64,
    pr_x_approx: f64,
    target_failure: f64,
    n_frames: Option<u64>,
}

fn x_rows(
    params: &ChannelParams,
    t_values: &[u64],
    target: f64,
    range: &Range,
) -> Result<Vec<XRow>, Failure> {
    if t_values.is_empty() {
        return Err(Failure::usage("at least one --t value is required"));
    }
    let mut out = Vec::new();
    for &t in t_values {
        for row in sweep_rows(params, range, Some((t, target)))? {
            let plan = row.xbasis.expect("sweep was asked for X-basis columns");
            out.push(XRow {
                t,
                d_km: row.rate.d,
                mu: row.rate.mu_used,
                q: row.rate.q_avg,
                p_event: plan.p_event,
                pr_x: plan.pr_exact,
                pr_x_approx: plan.pr_approx,
                target_failure: plan.target_failure,
                n_frames: plan.n_frames.frames(),
            });
        }
    }
    Ok(out)
}

pub fn xbasis(common: &Common, t_values: &[u64], range: &Range) -> Result<(), Failure> {
    let params = load_params(common)?;
    let rows = x_rows(&params, t_values, DEFAULT_TARGET_FAILURE, range)?;
    let manifest = RunManifest::new("xbasis", common, common.seed);
    emit(common, Format::Csv, &manifest, json!({ "rows": rows }), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["T", "d_km", "mu", "Q", "p_event", "PrXT", "PrXT_approx"])?;
        for r in &rows {
            w.write_record([
                r.t.to_string(),
                r.d_km.to_string(),
                r.mu.to_string(),
                r.q.to_string(),
                r.p_event.to_string(),
                r.pr_x.to_string(),
                r.pr_x_approx.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn frames(common: &Common, t_values: &[u64], target: f64, range: &Range) -> Result<(), Failure> {
    let params = load_params(common)?;
    let rows = x_rows(&params, t_values, target, range)?;
    let manifest = RunManifest::new("frames", common, common.seed);
    emit(common, Format::Csv, &manifest, json!({ "rows": rows }), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["T", "d_km", "mu", "Q", "p_event", "PrXT", "target_failure", "N"])?;
        for r in &rows {
            w.write_record([
                r.t.to_string(),
                r.d_km.to_string(),
                r.mu.to_string(),
                r.q.to_string(),
                r.p_event.to_string(),
                r.pr_x.to_string(),
                r.target_failure.to_string(),
                r.n_frames.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn check_workers(workers: Option<usize>) -> Result<(), Failure> {
    if workers == Some(0) {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    Ok(())
}

pub fn simulate(
    common: &Common,
    rounds: u64,
    distance: f64,
    workers: Option<usize>,
    dump_rounds: bool,
) -> Result<(), Failure> {
    check_workers(workers)?;
    let params = load_params(common)?;
    let seed = resolve_seed(common);
    let cfg = SimConfig::new(params, distance, seed)
        .map_err(lib)?
        .with_workers(workers);
    let transcript = sim::simulate_protocol(&cfg, rounds, dump_rounds).map_err(lib)?;
    let manifest = RunManifest::new("simulate", common, Some(seed));
    let mut doc = serde_json::to_value(&transcript).expect("transcript serializes");
    doc["distance_km"] = json!(distance);
    let report = &transcript.report;
    emit(common, Format::Json, &manifest, doc, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.serialize(report)?;
        w.flush()?;
        Ok(())
    })?;
    if report.aborted {
        return Err(Failure::Abort(
            report.abort_reason.clone().unwrap_or_else(|| "estimation aborted".into()),
        ));
    }
    Ok(())
}

pub struct TransmitArgs {
    pub plaintext: PathBuf,
    pub distance: f64,
    pub frame_bits: usize,
    pub pool_bits: usize,
    pub workers: Option<usize>,
    pub frames_dir: Option<PathBuf>,
    pub recovered: Option<PathBuf>,
}

pub fn transmit(common: &Common, args: &TransmitArgs) -> Result<(), Failure> {
    check_workers(args.workers)?;
    if args.frame_bits == 0 {
        return Err(Failure::usage("--frame-bits must be at least 1"));
    }
    let params = load_params(common)?;
    let bytes = fs::read(&args.plaintext)
        .with_context(|| format!("reading {}", args.plaintext.display()))
        .map_err(Failure::Io)?;
    if bytes.is_empty() {
        return Err(Failure::usage(format!(
            "plaintext file {} is empty",
            args.plaintext.display()
        )));
    }
    let seed = resolve_seed(common);
    let mut manifest = RunManifest::new("transmit", common, Some(seed));
    let plain = bits::unpack(&bytes, bytes.len() * 8);
    let mut link = Link::with_pool(params, args.distance, seed, args.pool_bits)
        .map_err(lib)?
        .with_workers(args.workers);
    if let Some(dir) = &args.frames_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Io)?;
    }

    let mut outcomes = Vec::new();
    let mut recovered = Vec::with_capacity(plain.len());
    let mut abort = None;
    for chunk in plain.chunks(args.frame_bits) {
        let out = link.run_frame(chunk).map_err(|e| match e {
            SimError::Coding(CodingError::PoolUnderflow { .. }) => {
                Failure::usage(format!("{e}; raise --pool-bits"))
            }
            e => lib(e),
        })?;
        if let Some(dir) = &args.frames_dir {
            let file = FrameFile {
                m: out.coding.m as u32,
                l: out.coding.l as u32,
                n: out.coding.n as u32,
                c: bits::parse(&out.ciphertext).expect("ciphertext is a bit string"),
                g: bits::parse(&out.hash_seed).expect("hash seed is a bit string"),
            };
            let raw = file.to_bytes().map_err(lib)?;
            let stem = dir.join(format!("frame_{:05}", out.frame));
            for (path, data) in [
                (stem.with_extension("moqf"), raw.clone()),
                (stem.with_extension("hex"), hex_dump(&raw).into_bytes()),
            ] {
                write_file(&path, &data)?;
                manifest.outputs.push(path.display().to_string());
            }
        }
        if out.aborted() {
            let why = out.report.abort_reason.clone().unwrap_or_default();
            abort = Some(format!("frame {}: {why}", out.frame));
        } else {
            match &out.recovered {
                Some(p) => recovered.extend_from_slice(p),
                None => {
                    let why = out.decode_error.clone().unwrap_or_default();
                    abort = Some(format!("frame {} not decoded: {why}", out.frame));
                }
            }
        }
        outcomes.push(out);
        if abort.is_some() {
            break;
        }
    }

    let complete = abort.is_none();
    if let (true, Some(path)) = (complete, &args.recovered) {
        write_file(path, &bits::pack(&recovered))?;
        manifest.outputs.push(path.display().to_string());
    }
    let doc = json!({
        "distance_km": args.distance,
        "frame_bits": args.frame_bits,
        "plaintext_bits": plain.len(),
        "frames": outcomes,
        "complete": complete,
        "matches_plaintext": complete && recovered == plain,
    });
    emit(common, Format::Json, &manifest, doc, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "frame", "m", "l", "n", "r", "n_rounds", "received", "rates_ok", "aborted", "recovered",
        ])?;
        for o in &outcomes {
            w.write_record([
                o.frame.to_string(),
                o.coding.m.to_string(),
                o.coding.l.to_string(),
                o.coding.n.to_string(),
                o.coding.r.to_string(),
                o.n_rounds.to_string(),
                o.received.to_string(),
                o.verdict.pass.to_string(),
                o.aborted().to_string(),
                o.recovered.is_some().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    match abort {
        Some(why) => Err(Failure::Abort(why)),
        None => Ok(()),
    }
}
