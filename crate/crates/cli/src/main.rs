mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bohm_sim::io::{meta, write_json, write_row, write_snapshot_csv, write_tracks_csv, write_trajectories_csv};
use bohm_sim::kg::{currents, KgField, MultiPoint, TwoPhotonConfig, VelocityField};
use bohm_sim::lorentz::redshift_packets;
use bohm_sim::metric::{coordinate_velocity, shift_from_current, Branch};
use bohm_sim::paraxial::{current_paraxial, paraxial_threshold, ParaxialField};
use bohm_sim::trajectories::{
    integrate_boosted, integrate_ensemble, path_discrepancy, pinned_ics, sample_initial, snapshot_alive, symmetric_ics,
    BoostedSample, Ensemble,
};
use bohm_sim::verification::{run_suite, transport_chi_square};
use bohm_sim::weak_value::{velocity_m_with, EqualTimePoint};
use bohm_sim::Boost;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use config::{ConfigError, Dispersion, InitialConditions, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "bohm-sim", version, about = "Bohmian trajectories of two entangled photons in 1+1 dimensions")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sampled initial conditions and the verification suite.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    dispersion: Option<DispersionArg>,
    /// Longitudinal wavenumber for paraxial dispersion.
    #[arg(long, global = true)]
    kz: Option<f64>,
    /// Frame velocity of the boost.
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DispersionArg {
    Optical,
    Paraxial,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Velocity, density and current on the configured grid.
    Velocity,
    /// Integrate the configured initial conditions over the time window.
    Trajectories,
    /// Ensemble positions at one time.
    Snapshot {
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
    /// Boosted-frame tracks by pointwise boosting and by re-integration.
    Boost,
    /// Shift-metric map of particle 1 with its partner mirrored at -x.
    Metric,
    /// Run the verification suite; exit status 1 if any check fails.
    Verify,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(passed) => ExitCode::from(if passed { 0 } else { 1 }),
        Err(e) => {
            eprintln!("bohm-sim: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// Config file, then command-line overrides, then validation of the result.
fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut rc = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.out.clone() {
        rc.output.dir = d;
    }
    if let Some(s) = cli.seed {
        match &mut rc.ics {
            InitialConditions::Ensemble { seed, .. } | InitialConditions::Pinned { seed, .. } => *seed = s,
            _ => {}
        }
        rc.verify.seed = s;
    }
    match (cli.dispersion, cli.kz) {
        (Some(DispersionArg::Optical), Some(_)) => return Err(CliError::Usage("--kz requires paraxial dispersion".into())),
        (Some(DispersionArg::Optical), None) => rc.dispersion = Dispersion::Optical,
        (Some(DispersionArg::Paraxial), Some(kz)) => rc.dispersion = Dispersion::Paraxial { kz },
        (Some(DispersionArg::Paraxial), None) => match rc.dispersion {
            Dispersion::Paraxial { .. } => {}
            Dispersion::Optical => return Err(CliError::Usage("--dispersion paraxial needs --kz".into())),
        },
        (None, Some(kz)) => match &mut rc.dispersion {
            Dispersion::Paraxial { kz: k } => *k = kz,
            Dispersion::Optical => return Err(CliError::Usage("--kz requires paraxial dispersion".into())),
        },
        (None, None) => {}
    }
    if cli.theta.is_some() {
        rc.boost = cli.theta;
    }
    rc.validate().map_err(|e| CliError::Usage(format!("`{}` after command-line overrides: {}", e.field, e.msg)))?;
    Ok(rc)
}

fn run(cli: &Cli) -> Result<bool> {
    let rc = effective_config(cli)?;
    let dir = rc.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    write_file(&dir.join("config.json"), |w| writeln!(w, "{}", rc.to_json()))?;
    let ctx = Ctx { rc, dir, quiet: cli.quiet };
    match &cli.cmd {
        Command::Velocity => ctx.velocity().map(|_| true),
        Command::Trajectories => ctx.trajectories().map(|_| true),
        Command::Snapshot { t } => ctx.snapshot(*t).map(|_| true),
        Command::Boost => ctx.boost().map(|_| true),
        Command::Metric => ctx.metric().map(|_| true),
        Command::Verify => ctx.verify(),
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

struct Ctx {
    rc: RunConfig,
    dir: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn base(&self) -> TwoPhotonConfig {
        self.rc.two_photon().expect("validated")
    }

    fn boost_opt(&self) -> Option<Boost> {
        self.rc.boost().expect("validated")
    }

    /// Packets as seen in the frame the outputs are expressed in.
    fn frame_cfg(&self) -> Result<TwoPhotonConfig> {
        let c = self.base();
        match self.boost_opt() {
            Some(b) => redshift_packets(&b, &c).map_err(|e| CliError::Runtime(format!("redshift: {e}"))),
            None => Ok(c),
        }
    }

    fn frame_meta(&self, kind: &str, cfg: &TwoPhotonConfig) -> serde_json::Value {
        meta(
            kind,
            json!({
                "packets": cfg,
                "dispersion": self.rc.dispersion,
                "theta": self.rc.boost,
                "primed": self.rc.boost.is_some(),
            }),
        )
    }

    fn ics(&self, cfg: &TwoPhotonConfig) -> Result<(Vec<(f64, f64)>, Option<u64>)> {
        let t0 = self.rc.time.t0;
        Ok(match &self.rc.ics {
            InitialConditions::Explicit { pairs } => (pairs.clone(), None),
            InitialConditions::Ensemble { n, seed } => (
                sample_initial(cfg, t0, *n, *seed).map_err(|e| CliError::Runtime(format!("sampling initial conditions: {e}")))?,
                Some(*seed),
            ),
            InitialConditions::Pinned { x1, n, seed } => (pinned_ics(cfg, t0, *x1, *n, *seed), Some(*seed)),
            InitialConditions::Symmetric { n } => (symmetric_ics(cfg, t0, *n), None),
        })
    }

    fn ensemble(&self, cfg: &TwoPhotonConfig, t1: f64) -> Result<Ensemble> {
        let (ics, seed) = self.ics(cfg)?;
        let t0 = self.rc.time.t0;
        let opts = &self.rc.integrator;
        Ok(match self.rc.dispersion {
            Dispersion::Optical => integrate_ensemble(cfg, &KgField::new(*cfg), &ics, t0, t1, opts, seed),
            Dispersion::Paraxial { kz } => {
                let f = ParaxialField::new(*cfg, kz).map_err(|e| CliError::Runtime(e.to_string()))?;
                integrate_ensemble(cfg, &f, &ics, t0, t1, opts, seed)
            }
        })
    }

    fn velocity(&self) -> Result<()> {
        let cfg = self.frame_cfg()?;
        let pts = self.rc.grid.points();
        let kg_field = KgField::new(cfg);
        let eps_m = cfg.node_threshold(bohm_sim::kg::DEFAULT_NODE_REL);
        let path = self.dir.join("velocity.csv");
        let mut nodes = 0usize;
        write_file(&path, |w| {
            writeln!(w, "t,x1,x2,v1_kg,v2_kg,v1_m,v2_m,rho1,rho2,j1,j2")?;
            for p in &pts {
                let mp = MultiPoint::equal_time(p.t, p.x1, p.x2);
                let nan = (f64::NAN, f64::NAN);
                let (vk, vm, c1, c2) = match self.rc.dispersion {
                    Dispersion::Optical => {
                        let (c1, c2) = currents(&cfg, &mp);
                        let vk = kg_field.velocity(&mp).unwrap_or(nan);
                        let vm = velocity_m_with(&cfg, &EqualTimePoint::new(p.t, p.x1, p.x2), eps_m).unwrap_or(nan);
                        (vk, vm, c1, c2)
                    }
                    Dispersion::Paraxial { kz } => {
                        let eps = paraxial_threshold(&cfg, bohm_sim::kg::DEFAULT_NODE_REL);
                        let v = bohm_sim::paraxial::velocity_paraxial_with(&cfg, kz, &mp, eps).unwrap_or(nan);
                        (v, v, current_paraxial(&cfg, kz, &mp, 1), current_paraxial(&cfg, kz, &mp, 2))
                    }
                };
                if vk.0.is_nan() {
                    nodes += 1;
                }
                write_row(w, &[p.t, p.x1, p.x2, vk.0, vk.1, vm.0, vm.1, c1.rho, c2.rho, c1.j, c2.j])?;
            }
            Ok(())
        })?;
        self.say(format!("velocity: {} grid points ({nodes} at nodes) -> {}", pts.len(), path.display()));
        Ok(())
    }

    fn trajectories(&self) -> Result<()> {
        let cfg = self.frame_cfg()?;
        let ens = self.ensemble(&cfg, self.rc.time.t1)?;
        let csv = self.dir.join("trajectories.csv");
        write_file(&csv, |w| write_trajectories_csv(w, &ens))?;
        let js = self.dir.join("trajectories.json");
        let m = self.frame_meta("trajectories", &cfg);
        write_file(&js, |w| write_json(w, m, &ens))?;
        self.say(format!(
            "trajectories: {} complete, {} terminated early -> {}",
            ens.pairs.len(),
            ens.failures.len(),
            csv.display()
        ));
        Ok(())
    }

    fn snapshot(&self, t: f64) -> Result<()> {
        let (t0, t1) = (self.rc.time.t0, self.rc.time.t1);
        if !(t >= t0 && t <= t1) {
            return Err(CliError::Usage(format!("--t {t} outside the time window [{t0}, {t1}]")));
        }
        let cfg = self.frame_cfg()?;
        let ens = self.ensemble(&cfg, t.max(t0 + 1e-12 * (1.0 + t0.abs())))?;
        let snap = snapshot_alive(&ens, t);
        let csv = self.dir.join("snapshot.csv");
        write_file(&csv, |w| write_snapshot_csv(w, &snap.ids, &snap.points))?;
        let chi = match self.rc.dispersion {
            Dispersion::Optical if !snap.points.is_empty() => Some(transport_chi_square(&cfg, t, &snap.points, 40)),
            _ => None,
        };
        let m = self.frame_meta("snapshot", &cfg);
        let data = json!({ "snapshot": snap, "chi_square": chi });
        write_file(&self.dir.join("snapshot.json"), |w| write_json(w, m, &data))?;
        let mut msg = format!("snapshot t={t}: {} points, {} missing", snap.points.len(), snap.missing.len());
        if let Some(c) = chi {
            msg += &format!(", chi2 {:.1} on {} dof, p = {:.3}", c.statistic, c.dof, c.p_value);
        }
        self.say(format!("{msg} -> {}", csv.display()));
        Ok(())
    }

    fn boost(&self) -> Result<()> {
        let b = self.boost_opt().ok_or_else(|| CliError::Usage("boost needs --theta or a `boost` entry in the config".into()))?;
        if let Dispersion::Paraxial { .. } = self.rc.dispersion {
            return Err(CliError::Usage("boost supports optical dispersion only".into()));
        }
        let cfg = self.base();
        let (ics, _) = self.ics(&cfg)?;
        let opts = bohm_sim::trajectories::IntegratorOpts { keep_dense: true, ..self.rc.integrator };
        let bundle = integrate_boosted(&cfg, &b, &ics, self.rc.time.t0, self.rc.time.t1, &opts)
            .map_err(|e| CliError::Runtime(format!("boost: {e}")))?;
        let a_path = self.dir.join("boost_path_a.csv");
        write_file(&a_path, |w| {
            let rows = bundle.path_a.iter().enumerate().filter_map(|(i, p)| p.as_ref().ok().map(|p| (i, p)));
            write_tracks_csv(w, rows.flat_map(|(i, p)| [(i, 1u8, p.tracks[0].as_slice()), (i, 2u8, p.tracks[1].as_slice())]))
        })?;
        let b_tracks: Vec<(usize, u8, Vec<BoostedSample>)> = bundle
            .path_b
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().ok().map(|p| (i, p)))
            .flat_map(|(i, p)| {
                [1u8, 2].map(|k| {
                    let mut tr = if k == p.staged_particle { p.prelude.clone() } else { Vec::new() };
                    tr.extend(p.pair.samples.iter().map(|s| {
                        let (x, v) = if k == 1 { (s.x1, s.v1) } else { (s.x2, s.v2) };
                        BoostedSample { t_source: s.t, t: s.t, x, v, backwards: false }
                    }));
                    (i, k, tr)
                })
            })
            .collect();
        let b_path = self.dir.join("boost_path_b.csv");
        write_file(&b_path, |w| write_tracks_csv(w, b_tracks.iter().map(|(i, k, tr)| (*i, *k, tr.as_slice()))))?;
        let pairs: Vec<_> = bundle
            .path_a
            .iter()
            .zip(&bundle.path_b)
            .enumerate()
            .map(|(i, (a, pb))| match (a, pb) {
                (Ok(a), Ok(pb)) => {
                    let (d, n) = path_discrepancy(&b, a, pb);
                    json!({ "pair_id": i, "discrepancy": d, "points_compared": n })
                }
                (a, pb) => json!({
                    "pair_id": i,
                    "path_a_error": a.as_ref().err(),
                    "path_b_error": pb.as_ref().err(),
                }),
            })
            .collect();
        let worst = pairs.iter().filter_map(|p| p["discrepancy"].as_f64()).fold(0.0, f64::max);
        let summary = json!({
            "theta": b.theta(),
            "gamma": b.gamma(),
            "packets_boosted": bundle.cfg_boosted,
            "backwards_samples": bundle.backwards_samples(),
            "decreasing_segments": bundle.decreasing_segments(),
            "max_discrepancy": worst,
            "pairs": pairs,
        });
        write_file(&self.dir.join("boost.json"), |w| write_json(w, meta("boost", json!({ "packets": cfg })), &summary))?;
        self.say(format!(
            "boost theta={}: max path discrepancy {worst:.3e}, {} samples with rho' <= 0 -> {}",
            b.theta(),
            bundle.backwards_samples(),
            self.dir.display()
        ));
        Ok(())
    }

    fn metric(&self) -> Result<()> {
        let cfg = self.frame_cfg()?;
        let g = &self.rc.grid;
        let eps = match self.rc.dispersion {
            Dispersion::Optical => cfg.node_threshold(bohm_sim::kg::DEFAULT_NODE_REL),
            Dispersion::Paraxial { .. } => paraxial_threshold(&cfg, bohm_sim::kg::DEFAULT_NODE_REL),
        };
        let path = self.dir.join("metric.csv");
        write_file(&path, |w| {
            writeln!(w, "t,x,vs,v")?;
            for t in g.times() {
                for x in g.xs() {
                    let mp = MultiPoint::equal_time(t, x, -x);
                    let cd = match self.rc.dispersion {
                        Dispersion::Optical => currents(&cfg, &mp).0,
                        Dispersion::Paraxial { kz } => current_paraxial(&cfg, kz, &mp, 1),
                    };
                    let (vs, v) = match shift_from_current(cd, eps) {
                        Ok(ms) => (ms.vs, coordinate_velocity(&ms, Branch::co_moving(cd.velocity()))),
                        Err(_) => (f64::NAN, f64::NAN),
                    };
                    write_row(w, &[t, x, vs, v])?;
                }
            }
            Ok(())
        })?;
        self.say(format!("metric: {} points -> {}", g.nt * g.nx, path.display()));
        Ok(())
    }

    fn verify(&self) -> Result<bool> {
        let cfg = self.base();
        let report = run_suite(&cfg, &self.rc.verify);
        let path = self.dir.join("verify.json");
        write_file(&path, |w| write_json(w, meta("verify", json!({ "packets": cfg })), &report))?;
        for c in &report.checks {
            self.say(format!("{:<28} {} {:.3e} (threshold {:.3e})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.value, c.threshold));
        }
        self.say(format!("verify: {} -> {}", if report.passed { "all checks passed" } else { "checks failed" }, path.display()));
        Ok(report.passed)
    }
}

