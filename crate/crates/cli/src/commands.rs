use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand};
use serde::Serialize;
use sssc_core::features::{build_motion_matrix, read_trajectory_csv, write_trajectory_csv};
use sssc_core::io::{read_labels, write_labels, write_matrix_csv, Manifest};
use sssc_core::metrics::{clustering_error_auto, coseg_score, coseg_score_symmetric};
use sssc_core::synth::{
    gen_rigid_motion_trajectories, generate_subspaces, MotionSpec, SubspaceSpec,
};
use sssc_core::{run_pipeline, Error, FeatureMatrix, Labels, Result, SolverConfig};

use crate::report::{RunReport, Timings};
use crate::{OutputArgs, SolverArgs};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn cluster_features(
    features: &[FeatureMatrix],
    config: SolverConfig,
    output: &OutputArgs,
    load_secs: f64,
) -> Result<()> {
    config.validate()?;
    ensure_dir(&output.out_dir)?;
    let t = Instant::now();
    let result = run_pipeline(features, &config)?;
    let pipeline_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let labels_path = output.out_dir.join("labels.txt");
    write_labels(&labels_path, &result.labels)?;
    let mut report = RunReport::new(
        Path::new("labels.txt"),
        &config,
        features.len(),
        &result,
        !output.omit_timings,
    );
    if !output.omit_timings {
        report.timings = Some(Timings {
            load_secs,
            pipeline_secs,
            final_spectral_secs: result.final_spectral_time.as_secs_f64(),
            write_secs: t.elapsed().as_secs_f64(),
        });
    }
    write_json(&output.out_dir.join("report.json"), &report)
}

pub fn cluster(manifest: &Path, solver: &SolverArgs, output: &OutputArgs) -> Result<()> {
    let t = Instant::now();
    let problem = Manifest::load(manifest)?;
    let config = solver.apply(problem.config);
    cluster_features(&problem.features, config, output, t.elapsed().as_secs_f64())
}

pub fn motion(
    trajectories: &Path,
    matrix: &Path,
    frames: Option<usize>,
    signature: bool,
    clusters: Option<usize>,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<()> {
    let t = Instant::now();
    let traj = read_trajectory_csv(trajectories, frames)?;
    let m = build_motion_matrix(&traj, signature)?;
    write_matrix_csv(matrix, &m.data)?;
    let meta = serde_json::json!({
        "rows": m.data.nrows(),
        "points": m.data.ncols(),
        "with_signature": m.with_signature,
        "interior_gap_entries": m.interior_gap_entries,
    });
    println!("{meta}");
    let Some(k) = clusters else {
        return Ok(());
    };
    let features = [FeatureMatrix::new(m.data, 1)?];
    let config = solver.apply(SolverConfig::with_clusters(k));
    let config = SolverConfig {
        num_clusters: k,
        ..config
    };
    cluster_features(&features, config, output, t.elapsed().as_secs_f64())
}

#[derive(Serialize)]
struct EvalOutput {
    score: f64,
    error: f64,
}

pub fn eval(predicted: &Path, truth: &Path, symmetric: bool) -> Result<()> {
    let pred = read_labels(predicted)?;
    let gt = read_labels(truth)?;
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    let score = if symmetric {
        coseg_score_symmetric(&pred, &gt)?
    } else {
        coseg_score(&pred, &gt)?
    };
    let error = clustering_error_auto(&gt, &pred)?;
    println!(
        "{}",
        serde_json::to_string(&EvalOutput { score, error }).expect("serializable")
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SubspaceArgs {
    /// Subspace dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Points per subspace, comma separated.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    #[arg(long)]
    ambient: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
}

impl SubspaceArgs {
    fn shape(&self) -> Result<(Vec<usize>, Vec<usize>, usize)> {
        match (&self.dims, &self.counts, self.ambient) {
            (Some(d), Some(c), Some(a)) => Ok((d.clone(), c.clone(), a)),
            _ => Err(Error::InvalidSpec(
                "--dims, --counts and --ambient are required".into(),
            )),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum SynthKind {
    /// Union of linear subspaces.
    Linear {
        #[command(flatten)]
        common: SubspaceArgs,
        /// Two lines and a plane in R^3 with 50, 50 and 150 points.
        #[arg(long)]
        lines_and_plane: bool,
        /// Keep raw coefficients instead of unit-norm points.
        #[arg(long)]
        raw: bool,
    },
    /// Union of affine subspaces.
    Affine {
        #[command(flatten)]
        common: SubspaceArgs,
        /// Norm of each subspace's offset.
        #[arg(long, default_value_t = 1.0)]
        offset: f64,
        /// All subspaces share one direction basis and differ only by offset.
        #[arg(long)]
        parallel: bool,
        /// Scale the in-subspace part of every point to unit norm.
        #[arg(long)]
        unit_norm: bool,
    },
    /// Rigid motions seen by an affine camera.
    Motion {
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        motions: usize,
        #[arg(long, default_value_t = 40)]
        points_per: usize,
        /// Fraction of points with truncated observation spans.
        #[arg(long, default_value_t = 0.0)]
        missing: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the motion matrix without signature rows.
        #[arg(long)]
        no_signature: bool,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Serialize)]
struct SpecRecord<'a, T: Serialize> {
    generator: &'a str,
    spec: &'a T,
}

fn write_instance(
    dir: &Path,
    generator: &str,
    spec: &impl Serialize,
    features: &[FeatureMatrix],
    truth: &Labels,
) -> Result<()> {
    ensure_dir(dir)?;
    let mut names = Vec::new();
    for (k, f) in features.iter().enumerate() {
        let name = if features.len() == 1 {
            "features.csv".to_string()
        } else {
            format!("features_{}.csv", k + 1)
        };
        write_matrix_csv(&dir.join(&name), f.data())?;
        names.push(PathBuf::from(name));
    }
    write_labels(&dir.join("ground_truth.txt"), truth)?;
    write_json(&dir.join("spec.json"), &SpecRecord { generator, spec })?;
    let manifest = Manifest {
        features: names,
        num_clusters: truth.num_clusters(),
        config: Default::default(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn synth(kind: &SynthKind) -> Result<()> {
    match kind {
        SynthKind::Linear {
            common,
            lines_and_plane,
            raw,
        } => {
            let mut spec = if *lines_and_plane {
                SubspaceSpec::three_subspaces_in_r3(common.seed)
            } else {
                let (dims, counts, ambient) = common.shape()?;
                SubspaceSpec::linear(&dims, &counts, ambient, common.sigma, common.seed)
            };
            spec.noise_sigma = common.sigma;
            spec.unit_norm = !raw;
            let inst = generate_subspaces(&spec)?;
            write_instance(
                &common.out_dir,
                "linear",
                &spec,
                &inst.features,
                &inst.ground_truth,
            )
        }
        SynthKind::Affine {
            common,
            offset,
            parallel,
            unit_norm,
        } => {
            let (dims, counts, ambient) = common.shape()?;
            let spec = SubspaceSpec {
                parallel: *parallel,
                unit_norm: *unit_norm,
                ..SubspaceSpec::affine(&dims, &counts, ambient, *offset, common.sigma, common.seed)
            };
            let inst = generate_subspaces(&spec)?;
            write_instance(
                &common.out_dir,
                "affine",
                &spec,
                &inst.features,
                &inst.ground_truth,
            )
        }
        SynthKind::Motion {
            frames,
            motions,
            points_per,
            missing,
            sigma,
            seed,
            no_signature,
            out_dir,
        } => {
            let spec = MotionSpec {
                frames: *frames,
                motions: *motions,
                points_per: *points_per,
                missing_frac: *missing,
                noise_sigma: *sigma,
                seed: *seed,
            };
            let inst = gen_rigid_motion_trajectories(&spec)?;
            let m = build_motion_matrix(&inst.trajectories, !no_signature)?;
            let features = [FeatureMatrix::new(m.data, 1)?];
            write_instance(out_dir, "motion", &spec, &features, &inst.ground_truth)?;
            write_trajectory_csv(&out_dir.join("trajectories.csv"), &inst.trajectories)
        }
    }
}
