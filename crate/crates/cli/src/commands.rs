use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use cqbem::assembly::{assemble_dense_tensor, Operator};
use cqbem::cqm_solver::{
    deviation_ratio, dirichlet_data, dense_weights, mot_solve, mot_solve_dense, neumann_trace, step_records,
    steps_for_courant, time_averaged_error, transform_weights, SphericalWave, StepRecord,
};
use cqbem::htensor::{compress_with, CompressionMetrics, HStructure, DENSE_CAP};
use cqbem::mesh::{make_sphere, SurfaceMesh};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_list, RunConfig};

pub const STEPS_CSV_VERSION: &str = "# cqbem steps v1";
pub const BENCH_CSV_VERSION: &str = "# cqbem bench v1";

const STEP_COLUMNS: [&str; 6] = ["n", "t", "q_norm", "error", "relative_error", "deviation"];
const BENCH_COLUMNS: [&str; 21] = [
    "panels",
    "steps",
    "final_time",
    "order",
    "eps",
    "eta",
    "n_min",
    "near_blocks",
    "far_blocks",
    "max_rank",
    "storage_total",
    "storage_near",
    "storage_far",
    "storage_bases",
    "storage_dense",
    "storage_h2_only",
    "compression_rate_dense",
    "compression_rate_h2",
    "relative_error",
    "compress_s",
    "structure_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WaveArg {
    /// Outgoing spherical wave reaching the surface right after t = 0.
    Spherical,
    /// Homogeneous data.
    Zero,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub config: RunConfig,
    #[arg(long, value_enum, default_value_t = WaveArg::Spherical)]
    pub wave: WaveArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: RunConfig,
    /// Icosphere refinements to sweep, comma separated.
    #[arg(long = "sphere-list")]
    pub sphere_list: Option<String>,
    /// Step counts to sweep.
    #[arg(long = "steps-list")]
    pub steps_list: Option<String>,
    /// Interpolation orders to sweep.
    #[arg(long = "order-list")]
    pub order_list: Option<String>,
    /// Tolerances to sweep.
    #[arg(long = "eps-list")]
    pub eps_list: Option<String>,
    /// Choose the step count per mesh from this Courant number dt/h.
    #[arg(long)]
    pub courant: Option<f64>,
}

fn emit(out: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_table<T: Serialize>(version: &str, columns: &[&str], rows: &[T]) -> Result<String> {
    let mut buf = format!("{version}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(columns)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf)?)
}

pub fn steps_csv(records: &[StepRecord]) -> Result<String> {
    csv_table(STEPS_CSV_VERSION, &STEP_COLUMNS, records)
}

fn check_oracle(mesh: &SurfaceMesh, steps: usize) -> Result<()> {
    let size = mesh.len() * mesh.len() * steps;
    if size > DENSE_CAP {
        bail!("oracle refused: dense tensor with {size} entries exceeds the cap of {DENSE_CAP}");
    }
    Ok(())
}

fn scheme_json(scheme: &cqbem::kernels::CqmScheme) -> serde_json::Value {
    json!({
        "steps": scheme.n_steps,
        "final_time": scheme.final_time(),
        "dt": scheme.dt,
        "radius": scheme.radius,
        "method": scheme.method.name(),
    })
}

pub fn compress(config: &RunConfig, dump: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let mesh = config.load_mesh()?;
    let scheme = config.scheme(config.steps)?;
    if config.oracle {
        check_oracle(&mesh, scheme.n_steps)?;
    }
    let params = config.params();
    let structure_start = Instant::now();
    let structure = Arc::new(HStructure::build(&mesh, &params)?);
    let structure_s = structure_start.elapsed().as_secs_f64();
    let mut ht = compress_with(Arc::clone(&structure), &mesh, &scheme, &params, Operator::SingleLayer)?;
    ht.timings.structure_s = structure_s;
    let compress_s = start.elapsed().as_secs_f64();
    let error = if config.oracle {
        let dense = assemble_dense_tensor(&mesh, &scheme, Operator::SingleLayer, &params.quad);
        Some(ht.relative_error(&dense)?)
    } else {
        None
    };
    if let Some(path) = dump {
        ht.save(path).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = json!({
        "config": config,
        "scheme": scheme_json(&scheme),
        "partition": structure.partition.stats(&structure.tree, &structure.tree),
        "metrics": ht.metrics(error, compress_s),
    });
    emit(config.out.as_deref(), "metrics.json", &(serde_json::to_string_pretty(&report)? + "\n"))
}

#[derive(Serialize)]
struct StageTimings {
    assembly_s: f64,
    factorisation_s: f64,
    marching_s: f64,
}

pub fn solve(args: &SolveArgs) -> Result<()> {
    let start = Instant::now();
    let config = &args.config;
    let mesh = config.load_mesh()?;
    let scheme = config.scheme(config.steps)?;
    if config.oracle {
        check_oracle(&mesh, scheme.n_steps)?;
    }
    let params = config.params();
    let wave = SphericalWave::arriving_at(&mesh);
    let (g, exact) = match args.wave {
        WaveArg::Spherical => (dirichlet_data(&mesh, &scheme, &wave), neumann_trace(&mesh, &scheme, &wave)),
        WaveArg::Zero => {
            let zeros = vec![DVector::zeros(mesh.len()); scheme.n_steps + 1];
            (zeros.clone(), zeros)
        }
    };
    let mass = DVector::from_column_slice(mesh.areas());

    let assembly_start = Instant::now();
    let structure = Arc::new(HStructure::build(&mesh, &params)?);
    let structure_s = assembly_start.elapsed().as_secs_f64();
    let mut metrics: Vec<CompressionMetrics> = Vec::new();
    let mut tensors = Vec::new();
    for op in [Operator::SingleLayer, Operator::DoubleLayer] {
        let op_start = Instant::now();
        let mut t = compress_with(Arc::clone(&structure), &mesh, &scheme, &params, op)?;
        t.timings.structure_s = structure_s;
        metrics.push(t.metrics(None, op_start.elapsed().as_secs_f64()));
        tensors.push(t);
    }
    let (v, k) = (tensors.remove(0), tensors.remove(0));
    let vw = transform_weights(&v, &scheme)?;
    let kw = transform_weights(&k, &scheme)?;
    drop((v, k));
    let assembly_s = assembly_start.elapsed().as_secs_f64();

    let solution = mot_solve(&vw, &kw, &g, &mass)?;
    drop((vw, kw));

    let reference = if config.oracle {
        let vd = dense_weights(&assemble_dense_tensor(&mesh, &scheme, Operator::SingleLayer, &params.quad), scheme.radius);
        let kd = dense_weights(&assemble_dense_tensor(&mesh, &scheme, Operator::DoubleLayer, &params.quad), scheme.radius);
        Some(mot_solve_dense(&vd, &kd, &g, &mass)?.q)
    } else {
        None
    };

    let records = step_records(&mesh, scheme.dt, &solution.q, &exact, reference.as_deref());
    let last = records.last().copied();
    let summary = json!({
        "config": config,
        "scheme": scheme_json(&scheme),
        "panels": mesh.len(),
        "wave_shift": matches!(args.wave, WaveArg::Spherical).then_some(wave.shift),
        "time_averaged_error": time_averaged_error(&mesh, &solution.q, &exact),
        "final_step_error": last.map(|r| r.error),
        "final_step_relative_error": last.and_then(|r| r.relative_error),
        "deviation_ratio": reference.as_ref().map(|r| deviation_ratio(&mesh, &solution.q, r, &exact)),
        "timings": StageTimings {
            assembly_s,
            factorisation_s: solution.timings.factor_s,
            marching_s: solution.timings.march_s,
        },
        "total_s": start.elapsed().as_secs_f64(),
        "single_layer": metrics[0],
        "double_layer": metrics[1],
    });
    let summary = serde_json::to_string_pretty(&summary)? + "\n";
    if let Some(dir) = config.out.as_deref() {
        emit(Some(dir), "steps.csv", &steps_csv(&records)?)?;
    }
    emit(config.out.as_deref(), "summary.json", &summary)
}

#[derive(Serialize)]
struct BenchRow {
    panels: usize,
    steps: usize,
    final_time: f64,
    order: usize,
    eps: f64,
    eta: f64,
    n_min: usize,
    near_blocks: usize,
    far_blocks: usize,
    max_rank: usize,
    storage_total: usize,
    storage_near: usize,
    storage_far: usize,
    storage_bases: usize,
    storage_dense: usize,
    storage_h2_only: usize,
    compression_rate_dense: f64,
    compression_rate_h2: f64,
    relative_error: Option<f64>,
    compress_s: f64,
    structure_s: f64,
}

fn list_or<T: std::str::FromStr>(list: &Option<String>, base: T) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    match list {
        Some(s) => parse_list(s).map_err(anyhow::Error::msg),
        None => Ok(vec![base]),
    }
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let config = &args.config;
    if let Some(c) = args.courant {
        if !(c > 0.0) {
            bail!("--courant must be positive");
        }
    }
    let meshes: Vec<SurfaceMesh> = match &args.sphere_list {
        Some(s) => parse_list::<u32>(s).map_err(anyhow::Error::msg)?.into_iter().map(make_sphere).collect(),
        None => vec![config.load_mesh()?],
    };
    let steps_list = list_or(&args.steps_list, config.steps)?;
    let orders = list_or(&args.order_list, config.order)?;
    let epsilons = list_or(&args.eps_list, config.eps)?;

    let mut jobs = Vec::new();
    for mesh in &meshes {
        for &base_steps in &steps_list {
            let steps = args
                .courant
                .map_or(base_steps, |c| steps_for_courant(config.final_time, mesh.mesh_width(), c));
            for &order in &orders {
                for &eps in &epsilons {
                    let job = RunConfig {
                        steps,
                        order,
                        eps,
                        ..config.clone()
                    };
                    job.validate().map_err(anyhow::Error::msg)?;
                    if config.oracle {
                        check_oracle(mesh, steps)?;
                    }
                    jobs.push((mesh, job));
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(jobs.len());
    for (mesh, job) in jobs {
        let scheme = job.scheme(job.steps)?;
        let params = job.params();
        let start = Instant::now();
        let structure = Arc::new(HStructure::build(mesh, &params)?);
        let structure_s = start.elapsed().as_secs_f64();
        let ht = compress_with(Arc::clone(&structure), mesh, &scheme, &params, Operator::SingleLayer)?;
        let compress_s = start.elapsed().as_secs_f64();
        let relative_error = if job.oracle {
            let dense = assemble_dense_tensor(mesh, &scheme, Operator::SingleLayer, &params.quad);
            Some(ht.relative_error(&dense)?)
        } else {
            None
        };
        let m = ht.metrics(relative_error, compress_s);
        rows.push(BenchRow {
            panels: m.panels,
            steps: m.slices,
            final_time: scheme.final_time(),
            order: m.order,
            eps: m.eps,
            eta: m.eta,
            n_min: m.n_min,
            near_blocks: m.near_blocks,
            far_blocks: m.far_blocks,
            max_rank: m.max_rank,
            storage_total: m.storage.total,
            storage_near: m.storage.near,
            storage_far: m.storage.far_coupling,
            storage_bases: m.storage.bases,
            storage_dense: m.storage.dense,
            storage_h2_only: m.storage.h2_only,
            compression_rate_dense: m.compression_rate_dense,
            compression_rate_h2: m.compression_rate_h2,
            relative_error,
            compress_s,
            structure_s,
        });
    }
    emit(config.out.as_deref(), "bench.csv", &csv_table(BENCH_CSV_VERSION, &BENCH_COLUMNS, &rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_version_and_header() {
        let rows: Vec<BenchRow> = Vec::new();
        let text = csv_table(BENCH_CSV_VERSION, &BENCH_COLUMNS, &rows).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec![BENCH_CSV_VERSION, &BENCH_COLUMNS.join(",")]);
    }

    #[test]
    fn step_rows_follow_the_header() {
        let rec = StepRecord {
            n: 2,
            t: 0.5,
            q_norm: 1.0,
            error: 0.25,
            relative_error: None,
            deviation: Some(1.0),
        };
        let text = steps_csv(&[rec]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "n,t,q_norm,error,relative_error,deviation");
        assert_eq!(lines[2], "2,0.5,1.0,0.25,,1.0");
    }
}
