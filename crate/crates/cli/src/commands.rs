use serde::{Deserialize, Serialize};

use scloc_core::eval::{summarize, write_frame_csv, EvalReport, FrameResult, Thresholds};
use scloc_core::experiment::Dataset;
use scloc_core::geometry::{pose_error, TrajectoryRecord};
use scloc_core::hierarchy::LabelHierarchy;
use scloc_core::localize::{evaluate_frames, frame_seed, localize_image};
use scloc_core::net::ConditionedNet;
use scloc_core::pose::{write_correspondences, PoseError, RansacConfig};
use scloc_core::synth::SceneModel;
use scloc_core::train::{train, LogRecord, Supervision, TrainError};

use crate::config::RunConfig;
use crate::store::{LocalizeRecord, RunDir, Split};
use crate::CliError;

pub fn dispatch(name: &str, cfg: &RunConfig) -> Result<(), CliError> {
    let dir = RunDir::new(&cfg.out)?;
    dir.write_bytes(&format!("resolved-{name}.toml"), cfg.to_toml().as_bytes())?;
    match name {
        "synth" => cmd_synth(cfg, &dir),
        "quantize" => cmd_quantize(cfg, &dir),
        "train" => cmd_train(cfg, &dir),
        "localize" => cmd_localize(cfg, &dir),
        "eval" => cmd_eval(cfg, &dir).map(|_| ()),
        "sweep-z" => cmd_sweep_z(cfg, &dir).map(|_| ()),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::NonFinite(_) => CliError::Numerical(e.to_string()),
        e => other(e),
    }
}

pub fn cmd_synth(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let data = Dataset::build(&cfg.scene_spec(), cfg.exec).map_err(other)?;
    dir.write_scene(&data.scene)?;
    let records: Vec<TrajectoryRecord> = data
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| TrajectoryRecord::new(i, p, &data.intrinsics, &data.grid))
        .collect();
    dir.write_trajectory(&records)?;
    for (i, f) in data.frames.iter().enumerate() {
        dir.write_frame(i, f)?;
    }
    dir.write_json(
        "split.json",
        &Split {
            train: data.train.clone(),
            test: data.test.clone(),
        },
    )?;
    println!(
        "synth: {} points, {} frames ({} train / {} test) in {}",
        data.scene.len(),
        data.frames.len(),
        data.train.len(),
        data.test.len(),
        dir.root.display()
    );
    Ok(())
}

pub fn cmd_quantize(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let scene = dir.read_scene()?;
    let model = cfg.model_spec();
    let hier =
        LabelHierarchy::build(&scene.point_vecs(), model.k, model.hierarchy_seed).map_err(other)?;
    dir.write_bytes("hierarchy.json", hier.to_json().map_err(other)?.as_bytes())?;
    println!(
        "quantize: {} regions x {} sub-regions",
        hier.num_regions(),
        hier.k
    );
    Ok(())
}

fn load_training(dir: &RunDir) -> Result<(LabelHierarchy, Split), CliError> {
    Ok((dir.read_hierarchy()?, dir.read_json("split.json")?))
}

pub fn cmd_train(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let (hier, split) = load_training(dir)?;
    let frames: Vec<_> = dir
        .read_frames(&split.train)?
        .into_iter()
        .map(|(_, f)| f)
        .collect();
    let mut net = ConditionedNet::new(cfg.model_spec().net_config(&hier));
    let mut log = Vec::new();
    let summary = train(
        &mut net,
        &hier,
        &frames,
        &cfg.train_config(),
        |r: &LogRecord| {
            serde_json::to_writer(&mut log, r).expect("log record serialises");
            log.push(b'\n');
        },
    )
    .map_err(train_error)?;
    dir.write_bytes("train_log.jsonl", &log)?;
    dir.write_checkpoint(&net)?;
    dir.write_json("train_summary.json", &summary)?;
    println!(
        "train: {} iterations over {} epochs, final loss {:.6}",
        summary.iterations, summary.epochs, summary.final_total
    );
    Ok(())
}

pub fn cmd_localize(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let (hier, split) = load_training(dir)?;
    let net = dir.read_checkpoint(cfg.model_spec().net_config(&hier))?;
    let frames = dir.read_frames(&split.test)?;
    let base = cfg.ransac_config();
    let results = cfg.exec.map(frames.len(), |i| {
        let (id, frame) = &frames[i];
        let ransac = RansacConfig {
            seed: frame_seed(base.seed, *id),
            ..base.clone()
        };
        let loc = localize_image(
            &net,
            &hier,
            &frame.image,
            &frame.intrinsics,
            &frame.grid,
            &ransac,
            scloc_core::exec::Exec::Serial,
        )?;
        let gt = frame
            .label_maps(&hier)
            .map_err(|e| scloc_core::net::NetError::ShapeMismatch(e.to_string()))?;
        let hits = scloc_core::eval::subregion_hits(&loc.pred, &gt)
            .map_err(|e| scloc_core::net::NetError::ShapeMismatch(e.to_string()))?;
        Ok::<_, scloc_core::net::NetError>((*id, loc, hits))
    });
    let mut records = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        let (id, loc, (hits, total)) = r.map_err(other)?;
        let mut corr = Vec::new();
        write_correspondences(&loc.correspondences, &mut corr).map_err(other)?;
        dir.write_bytes(&format!("corr/{id:04}.corr"), &corr)?;
        let mut rec = LocalizeRecord {
            frame_id: id,
            q: None,
            t: None,
            n_corr: loc.correspondences.len(),
            ransac_score: 0.0,
            refined: false,
            subregion_hits: hits,
            subregion_total: total,
            error: None,
        };
        match &loc.result {
            Ok(res) => {
                rec.set_pose(&res.pose);
                rec.ransac_score = res.score;
                rec.refined = res.refined;
            }
            Err(e) => {
                failures += 1;
                rec.error = Some(e.to_string());
            }
        }
        records.push(rec);
    }
    dir.write_jsonl("localize.jsonl", &records)?;
    println!("localize: {} frames, {} failed", records.len(), failures);
    if !records.is_empty() && failures == records.len() {
        return Err(CliError::Numerical(
            PoseError::AllHypothesesFailed.to_string(),
        ));
    }
    Ok(())
}

fn thresholds(cfg: &RunConfig, scene: &SceneModel) -> Thresholds {
    Thresholds {
        t_cm: 100.0 * cfg.t_fraction * scene.bounds.diameter(),
        r_deg: cfg.r_deg,
    }
}

pub fn cmd_eval(cfg: &RunConfig, dir: &RunDir) -> Result<EvalReport, CliError> {
    let scene = dir.read_scene()?;
    let truth = dir.read_trajectory()?;
    let records: Vec<LocalizeRecord> = dir.read_jsonl("localize.jsonl")?;
    let mut rows = Vec::with_capacity(records.len());
    for rec in &records {
        let gt = truth
            .iter()
            .find(|t| t.frame_id == rec.frame_id)
            .ok_or_else(|| {
                CliError::MissingInput(format!("frame {} not in trajectory.jsonl", rec.frame_id))
            })?;
        let (t_cm, r_deg) = rec.pose().map_or((f64::INFINITY, f64::INFINITY), |p| {
            pose_error(&p, &gt.pose())
        });
        rows.push(FrameResult {
            frame_id: rec.frame_id,
            t_cm,
            r_deg,
            n_corr: rec.n_corr,
            ransac_score: rec.ransac_score,
        });
    }
    let errors: Vec<(f64, f64)> = rows.iter().map(|r| (r.t_cm, r.r_deg)).collect();
    let mut report = summarize(&errors, thresholds(cfg, &scene))
        .map_err(|e| CliError::MissingInput(e.to_string()))?;
    let (hits, total) = records.iter().fold((0, 0), |(h, t), r| {
        (h + r.subregion_hits, t + r.subregion_total)
    });
    if total > 0 {
        report.subregion_accuracy = Some(hits as f64 / total as f64);
    }
    dir.write_json("metrics.json", &report)?;
    let mut csv = Vec::new();
    write_frame_csv(&mut csv, &rows).map_err(other)?;
    dir.write_bytes("frames.csv", &csv)?;
    println!(
        "eval: {} frames, median {:.2} cm / {:.2} deg, accuracy {:.1}% (< {:.1} cm, < {:.1} deg)",
        report.n_frames,
        report.median_t_cm,
        report.median_r_deg,
        100.0 * report.accuracy,
        report.thresholds.t_cm,
        report.thresholds.r_deg
    );
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub z: usize,
    pub accuracy: f64,
    pub median_t_cm: f64,
    pub median_r_deg: f64,
}

pub fn cmd_sweep_z(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<SweepRow>, CliError> {
    let scene = dir.read_scene()?;
    let (hier, split) = load_training(dir)?;
    let train_frames: Vec<_> = dir
        .read_frames(&split.train)?
        .into_iter()
        .map(|(_, f)| f)
        .collect();
    let test_frames = dir.read_frames(&split.test)?;
    let mut rows = Vec::new();
    for &z in &cfg.sweep.z {
        let mut tc = cfg.train_config();
        tc.supervision = Supervision::Sparse {
            keep_fraction: cfg.training.keep_fraction,
            z,
        };
        let mut net = ConditionedNet::new(cfg.model_spec().net_config(&hier));
        train(&mut net, &hier, &train_frames, &tc, |_| {}).map_err(train_error)?;
        let (_, report) = evaluate_frames(
            &net,
            &hier,
            &test_frames,
            &cfg.ransac_config(),
            thresholds(cfg, &scene),
            cfg.exec,
        )
        .map_err(other)?;
        println!("sweep-z: z = {z}, accuracy {:.1}%", 100.0 * report.accuracy);
        rows.push(SweepRow {
            z,
            accuracy: report.accuracy,
            median_t_cm: report.median_t_cm,
            median_r_deg: report.median_r_deg,
        });
    }
    let mut csv = String::from("z,accuracy,median_t_cm,median_r_deg\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.z, r.accuracy, r.median_t_cm, r.median_r_deg
        ));
    }
    dir.write_bytes("sweep_z.csv", csv.as_bytes())?;
    dir.write_json("sweep_z.json", &rows)?;
    Ok(rows)
}
