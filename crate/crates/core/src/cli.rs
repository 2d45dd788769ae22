//! Run configuration, report headers and the batch commands behind the
//! `brlie` binary. Every command is a plain function so tests can drive it
//! without a process boundary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diverge::{self, ConstructionStage, DivergenceConfig, DivergenceReport};
use crate::error::{Error, Result};
use crate::kernels::poisson::{
    kernel_poisson_auto, kernel_tilde, reference_calibration, wall_avoiding_grid,
};
use crate::kernels::{CentralKernel, RadialMultiplier, RadialTransform};
use crate::localize::{self, AnnulusConfig, LocalizationConfig};
use crate::rootsys::RootSystem;
use crate::weyl::weyl_denominator;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parameters of `kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    /// `bump_v`, `br:<δ>`, `br0`, `bar_phi` or `bar_phi:<δ₀>`.
    pub multiplier: String,
    pub scale: f64,
    /// `exact`, `tilde`, `poisson` or `compare`.
    pub mode: String,
    /// Explicit evaluation points in simple-root coordinates.
    pub points: Vec<Vec<f64>>,
    /// Size of the seeded wall-avoiding grid used when no points are given.
    pub grid_count: usize,
    pub grid_min_abs_d: f64,
    /// Γ-sum tail tolerance relative to the γ = 0 term.
    pub tail_tolerance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            multiplier: "bump_v".into(),
            scale: 10.0,
            mode: "compare".into(),
            points: vec![],
            grid_count: 32,
            grid_min_abs_d: 1e-3,
            tail_tolerance: 1e-4,
        }
    }
}

/// Parameters of `diverge`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergeParams {
    pub levels: Vec<f64>,
    pub epsilon: f64,
    pub probes: usize,
    pub n_start: usize,
    pub n_max: usize,
    pub max_retries: usize,
    pub budget: usize,
    pub asymptotic_tolerance: f64,
    pub scale_cap: f64,
    /// 0 disables the construction; J ≥ 2 builds stages 2..=J.
    pub stages: usize,
    pub forced_n: Option<usize>,
}

impl Default for DivergeParams {
    fn default() -> Self {
        let d = DivergenceConfig::default();
        Self {
            levels: vec![2.0],
            epsilon: 0.1,
            probes: d.probes,
            n_start: d.n_start,
            n_max: d.n_max,
            max_retries: d.max_retries,
            budget: d.budget,
            asymptotic_tolerance: d.asymptotic_tolerance,
            scale_cap: d.scale_cap,
            stages: 0,
            forced_n: None,
        }
    }
}

impl DivergeParams {
    pub fn divergence_config(&self, seed: u64) -> DivergenceConfig {
        DivergenceConfig {
            seed,
            probes: self.probes,
            n_start: self.n_start,
            n_max: self.n_max,
            max_retries: self.max_retries,
            budget: self.budget,
            asymptotic_tolerance: self.asymptotic_tolerance,
            scale_cap: self.scale_cap,
            forced_n: self.forced_n,
            ..DivergenceConfig::default()
        }
    }
}

/// Parameters of `localize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeParams {
    /// `scan`, `ae` or `both`.
    pub mode: String,
    /// Annulus radii as fractions of r0.
    pub epsilons: Vec<f64>,
    pub radial: usize,
    pub angular: usize,
    pub r_start: f64,
    pub beat_periods: f64,
    pub cut_factor: f64,
    pub u_fraction: f64,
    pub bump_inner: f64,
    pub bump_outer: f64,
    pub probe_fraction: f64,
    pub r_grid: Vec<f64>,
    pub d_samples: usize,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        let a = AnnulusConfig::default();
        let l = LocalizationConfig::default();
        Self {
            mode: "both".into(),
            epsilons: vec![0.2, 0.1, 0.05],
            radial: a.radial,
            angular: a.angular,
            r_start: a.r_start,
            beat_periods: a.beat_periods,
            cut_factor: a.cut_factor,
            u_fraction: l.u_fraction,
            bump_inner: l.bump_inner,
            bump_outer: l.bump_outer,
            probe_fraction: l.probe_fraction,
            r_grid: l.r_grid,
            d_samples: l.d_samples,
        }
    }
}

impl LocalizeParams {
    pub fn annulus_config(&self, seed: u64) -> AnnulusConfig {
        AnnulusConfig {
            seed,
            radial: self.radial,
            angular: self.angular,
            r_start: self.r_start,
            beat_periods: self.beat_periods,
            cut_factor: self.cut_factor,
        }
    }

    pub fn localization_config(&self, seed: u64) -> LocalizationConfig {
        LocalizationConfig {
            seed,
            u_fraction: self.u_fraction,
            bump_inner: self.bump_inner,
            bump_outer: self.bump_outer,
            probe_fraction: self.probe_fraction,
            r_grid: self.r_grid.clone(),
            d_samples: self.d_samples,
            ..LocalizationConfig::default()
        }
    }
}

/// One experiment: group, master seed, output directory and the parameters
/// of each command. Stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub group: String,
    pub experiment: String,
    pub seed: u64,
    pub output_dir: String,
    pub kernel: KernelParams,
    pub diverge: DivergeParams,
    pub localize: LocalizeParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            group: "A1".into(),
            experiment: "diverge".into(),
            seed: 2024,
            output_dir: "out".into(),
            kernel: KernelParams::default(),
            diverge: DivergeParams::default(),
            localize: LocalizeParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("bad run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::Config(format!("cannot serialise run config: {e}")))
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn root_system(&self) -> Result<RootSystem> {
        RootSystem::from_spec_str(&self.group)
    }
}

/// Provenance embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl ReportHeader {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            tool: "brlie".into(),
            version: VERSION.into(),
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            config: cfg.clone(),
        })
    }

    /// `# key=value` comment lines for the top of a CSV file.
    pub fn csv_comment(&self) -> String {
        format!(
            "# tool={} version={} config_hash={} seed={} group={} experiment={}\n",
            self.tool,
            self.version,
            self.config_hash,
            self.seed,
            self.config.group,
            self.config.experiment
        )
    }
}

/// Human-readable summary of a group.
pub fn group_info(spec: &str) -> Result<String> {
    let rs = RootSystem::from_spec_str(spec)?;
    let rec = rs.record();
    let mut s = String::new();
    let n = rs.dim as f64;
    let _ = writeln!(s, "group            {}", rec.spec);
    let _ = writeln!(s, "dimension n      {}", rec.dimension);
    let _ = writeln!(s, "rank m           {}", rec.rank);
    let _ = writeln!(s, "positive roots   {}", rec.positive_root_count);
    let _ = writeln!(s, "Weyl group |W|   {}", rec.weyl_order);
    let _ = writeln!(
        s,
        "<rho,rho>        {:.12}  (n/24 = {:.12})",
        rec.rho_norm2,
        n / 24.0
    );
    let _ = writeln!(s, "r0               {:.6}", rec.r0);
    let _ = writeln!(s, "alcove           {}", rec.fundamental_domain);
    let _ = writeln!(s, "Killing Gram (simple roots)");
    for row in &rec.gram {
        let _ = writeln!(s, "  {}", fmt_row(row));
    }
    let _ = writeln!(s, "fundamental weights (simple-root coordinates)");
    for w in &rec.fundamental_weights {
        let _ = writeln!(s, "  {}", fmt_row(w));
    }
    let _ = writeln!(s, "lattice basis 2π·coroots (simple-root coordinates)");
    for g in &rec.gamma_basis {
        let _ = writeln!(s, "  {}", fmt_row(g));
    }
    Ok(s)
}

fn fmt_row(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:>12.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_xi(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Kernel values as CSV: one row per point with `xi_*`, `abs_d` and the
/// columns of the chosen mode.
pub fn kernel_csv(cfg: &RunConfig) -> Result<String> {
    let rs = cfg.root_system()?;
    let p = &cfg.kernel;
    let mult = RadialMultiplier::parse_for(&p.multiplier, &rs)?;
    let mode = p.mode.as_str();
    if !matches!(mode, "exact" | "tilde" | "poisson" | "compare") {
        return Err(Error::Config(format!(
            "unknown kernel mode {mode:?}: expected exact, tilde, poisson or compare"
        )));
    }
    let points = if p.points.is_empty() {
        wall_avoiding_grid(&rs, p.grid_count, cfg.seed, p.grid_min_abs_d)?
    } else {
        p.points.clone()
    };
    if let Some(bad) = points.iter().find(|x| x.len() != rs.rank) {
        return Err(Error::Config(format!(
            "point {bad:?} does not have {} coordinates",
            rs.rank
        )));
    }
    let need_exact = matches!(mode, "exact" | "compare");
    let need_tilde = matches!(mode, "tilde" | "poisson" | "compare");
    let exact = if need_exact {
        Some(CentralKernel::new(&rs, mult.clone(), p.scale)?)
    } else {
        None
    };
    let (transform, c) = if need_tilde {
        (
            Some(RadialTransform::new(mult.clone(), rs.dim)?),
            Some(reference_calibration(&rs)?.constant()),
        )
    } else {
        (None, None)
    };

    let header = ReportHeader::new(cfg)?;
    let mut out = header.csv_comment();
    let _ = writeln!(
        out,
        "# multiplier={} scale={} mode={} constant={}",
        mult.label(),
        p.scale,
        mode,
        c.map(|z| format!("{:.17e}{:+.17e}i", z.re, z.im))
            .unwrap_or_else(|| "-".into())
    );
    let mut cols: Vec<String> = (0..rs.rank).map(|i| format!("xi_{i}")).collect();
    cols.push("abs_d".into());
    match mode {
        "exact" => cols.push("exact".into()),
        "tilde" => cols.push("tilde".into()),
        "poisson" => {
            cols.extend(["poisson", "tilde", "cut", "terms", "tail_bound"].map(String::from))
        }
        _ => cols.extend(["exact", "tilde", "poisson", "residual_times_d"].map(String::from)),
    }
    let _ = writeln!(out, "{}", cols.join(","));
    for xi in &points {
        let d = weyl_denominator(&rs, xi).norm();
        let mut row: Vec<String> = xi.iter().map(|x| format!("{x:.17e}")).collect();
        row.push(format!("{d:.17e}"));
        let e = exact.as_ref().map(|k| k.eval(xi)).transpose()?;
        let tl = match (&transform, c) {
            (Some(t), Some(c)) => Some(kernel_tilde(&rs, t, c, p.scale, xi)?),
            _ => None,
        };
        match mode {
            "exact" => row.push(format!("{:.17e}", e.unwrap_or(f64::NAN))),
            "tilde" => row.push(format!("{:.17e}", tl.unwrap_or(f64::NAN))),
            _ => {
                let (t, c) = (transform.as_ref().expect("transform"), c.expect("constant"));
                let pv = kernel_poisson_auto(&rs, t, c, p.scale, xi, p.tail_tolerance)?;
                if mode == "poisson" {
                    row.push(format!("{:.17e}", pv.value));
                    row.push(format!("{:.17e}", tl.unwrap_or(f64::NAN)));
                    row.push(format!("{:.17e}", pv.cut));
                    row.push(pv.terms.to_string());
                    row.push(format!("{:.17e}", pv.tail_bound));
                } else {
                    let e = e.unwrap_or(f64::NAN);
                    let t = tl.unwrap_or(f64::NAN);
                    row.push(format!("{e:.17e}"));
                    row.push(format!("{t:.17e}"));
                    row.push(format!("{:.17e}", pv.value));
                    row.push(format!("{:.17e}", (e - t).abs() * d));
                }
            }
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}

/// Everything `diverge` produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergeOutput {
    pub header: ReportHeader,
    pub runs: Vec<DivergenceReport>,
    pub stages: Vec<ConstructionStage>,
    pub stage_failure: Option<String>,
}

impl DivergeOutput {
    pub fn certified(&self) -> bool {
        self.runs.iter().all(|r| r.certified) && self.stage_failure.is_none()
    }

    pub fn probe_csv(&self) -> String {
        let mut s = self.header.csv_comment();
        s.push_str("level,probe,k_average,achieved_sup,witness_r,target,partial,pass\n");
        for r in &self.runs {
            for p in &r.probes {
                let _ = writeln!(
                    s,
                    "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
                    r.level,
                    p.probe,
                    p.k_average,
                    p.achieved_sup,
                    p.witness_r,
                    p.target,
                    p.partial,
                    p.pass
                );
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let h = &self.header;
        let _ = writeln!(
            s,
            "brlie {} diverge on {} (seed {}, config {})",
            h.version, h.config.group, h.seed, h.config_hash
        );
        if let Some(r) = self.runs.first() {
            let _ = writeln!(
                s,
                "k-profile fit: slope {:.6e} ± {:.2e}, intercept {:.6e}, R² {:.8}",
                r.k_fit.fit.slope,
                r.k_fit.fit.slope_stderr,
                r.k_fit.fit.intercept,
                r.k_fit.fit.r_squared
            );
            let _ = writeln!(
                s,
                "log constant c(G) = {:.6} (prefactor floor {:.6})",
                r.log_constant, r.prefactor_floor
            );
        }
        for r in &self.runs {
            let _ =
                writeln!(
                s,
                "L = {:<6} R0 = {:.4e}{} N = {:<5} pass rate {:.3} (need {:.3}) rounds {} -> {}",
                r.level,
                r.scale,
                if r.scale_capped { " (capped)" } else { "" },
                r.n_points,
                r.pass_rate,
                1.0 - r.epsilon,
                r.rounds,
                if r.certified { "certified" } else { "NOT certified" }
            );
        }
        for st in &self.stages {
            let _ = writeln!(
                s,
                "stage {}: eta {:.4e} R {:.4e} N {} kbar_sup {:.4e} invariants {} |III| max {:.4e} witness fraction {:.3}",
                st.index,
                st.eta,
                st.scale,
                st.n_points,
                st.kbar_sup,
                if st.invariants_hold() { "hold" } else { "VIOLATED" },
                st.third_term_max,
                st.witness_set_fraction
            );
        }
        if let Some(f) = &self.stage_failure {
            let _ = writeln!(s, "stage failure: {f}");
        }
        s
    }
}

/// Runs the configured divergence experiments. Failing certification is
/// reported in the output, not as an error.
pub fn diverge_run(cfg: &RunConfig) -> Result<DivergeOutput> {
    let rs = cfg.root_system()?;
    let p = &cfg.diverge;
    if p.levels.is_empty() && p.stages < 2 {
        return Err(Error::Config(
            "nothing to do: no levels and no construction stages".into(),
        ));
    }
    let dcfg = p.divergence_config(cfg.seed);
    let runs = p
        .levels
        .iter()
        .map(|&l| diverge::find_divergence_measure(&rs, l, p.epsilon, &dcfg).map(|r| r.report))
        .collect::<Result<Vec<_>>>()?;
    let mut stages = Vec::new();
    let mut stage_failure = None;
    if p.stages >= 2 {
        let mut prev = ConstructionStage::seed(&rs);
        stages.push(prev.clone());
        while prev.index < p.stages {
            match diverge::construction_stage(&rs, &prev, &dcfg)? {
                Ok(st) => {
                    prev = st.clone();
                    stages.push(st);
                }
                Err(f) => {
                    stage_failure = Some(format!("stage {}: {}", f.stage.index, f.reason));
                    stages.push(f.stage);
                    break;
                }
            }
        }
    }
    Ok(DivergeOutput {
        header: ReportHeader::new(cfg)?,
        runs,
        stages,
        stage_failure,
    })
}

/// Scan and localization results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizeOutput {
    pub header: ReportHeader,
    pub scans: Vec<localize::AnnulusScan>,
    pub localization: Option<localize::LocalizationReport>,
}

impl LocalizeOutput {
    pub fn scan_csv(&self) -> String {
        let mut s = self.header.csv_comment();
        s.push_str("epsilon,point,xi,r_lo,r_hi,sup,shifted_sup,theoretical_driver\n");
        for sc in &self.scans {
            for (i, p) in sc.points.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{:.17e},{},\"{}\",{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    sc.epsilon,
                    i,
                    fmt_xi(&p.xi),
                    sc.r_window.0,
                    sc.r_window.1,
                    p.sup,
                    p.shifted_sup,
                    p.driver
                );
            }
        }
        s
    }

    /// Annulus sups increase as ε shrinks, scans correlate with the driver
    /// and the localization probe decays.
    pub fn verdict(&self) -> bool {
        let grows = self
            .scans
            .windows(2)
            .all(|w| w[0].epsilon <= w[1].epsilon || w[1].annulus_sup > w[0].annulus_sup);
        let correlated = self.scans.iter().all(|s| s.rank_correlation > 0.9);
        let decays = self
            .localization
            .as_ref()
            .is_none_or(|l| !l.admissible || l.decays);
        grows && correlated && decays
    }
}

pub fn localize_run(cfg: &RunConfig) -> Result<LocalizeOutput> {
    let rs = cfg.root_system()?;
    let p = &cfg.localize;
    let (scan, ae) = match p.mode.as_str() {
        "scan" => (true, false),
        "ae" => (false, true),
        "both" => (rs.rank >= 2, true),
        m => {
            return Err(Error::Config(format!(
                "unknown localize mode {m:?}: expected scan, ae or both"
            )))
        }
    };
    let scans = if scan {
        let acfg = p.annulus_config(cfg.seed);
        p.epsilons
            .iter()
            .map(|f| localize::annulus_blowup_scan(&rs, f * rs.r0, &acfg))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![]
    };
    let localization = if ae {
        Some(localize::ae_localization_check(
            &rs,
            &p.localization_config(cfg.seed),
        )?)
    } else {
        None
    };
    Ok(LocalizeOutput {
        header: ReportHeader::new(cfg)?,
        scans,
        localization,
    })
}

/// Writes `name → contents` pairs under `dir`, creating it.
pub fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body)?;
            Ok(path)
        })
        .collect()
}

/// `diverge` end to end: writes `diverge.json`, `probes.csv` and
/// `summary.txt`. Check [`DivergeOutput::certified`] afterwards.
pub fn cmd_diverge(cfg: &RunConfig) -> Result<DivergeOutput> {
    let out = diverge_run(cfg)?;
    write_files(
        Path::new(&cfg.output_dir),
        &[
            ("diverge.json", serde_json::to_string_pretty(&out)? + "\n"),
            ("probes.csv", out.probe_csv()),
            ("summary.txt", out.summary()),
        ],
    )?;
    Ok(out)
}

/// `localize` end to end: writes `scan.csv` (when scans ran) and
/// `localization.json`. Check [`LocalizeOutput::verdict`] afterwards.
pub fn cmd_localize(cfg: &RunConfig) -> Result<LocalizeOutput> {
    let out = localize_run(cfg)?;
    let mut files = vec![(
        "localization.json",
        serde_json::to_string_pretty(&out)? + "\n",
    )];
    if !out.scans.is_empty() {
        files.push(("scan.csv", out.scan_csv()));
    }
    write_files(Path::new(&cfg.output_dir), &files)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_hashes_stably() {
        let mut cfg = RunConfig::default();
        cfg.diverge.forced_n = Some(3);
        cfg.kernel.points = vec![vec![0.25]];
        let s = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(other.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn partial_configs_take_defaults() {
        let cfg = RunConfig::from_toml_str("group = \"A2\"\n[diverge]\nlevels = [4.0]\n").unwrap();
        assert_eq!(cfg.group, "A2");
        assert_eq!(cfg.diverge.levels, vec![4.0]);
        assert_eq!(cfg.diverge.epsilon, 0.1);
        let err = RunConfig::from_toml_str("grop = \"A2\"").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn group_info_examples() {
        let s = group_info("A1").unwrap();
        assert!(s.contains("dimension n      3"));
        assert!(s.contains("rank m           1"));
        assert!(s.contains("Weyl group |W|   2"));
        assert!(s.contains("0.125000000000"));
        let s = group_info("A1xA1").unwrap();
        assert!(
            s.contains("dimension n      6")
                && s.contains("rank m           2")
                && s.contains("|W|   4")
        );
        let e = group_info("Z9").unwrap_err();
        assert!(e.to_string().contains("<letter><rank>"));
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn kernel_exact_at_identity() {
        let mut cfg = RunConfig::default();
        cfg.kernel.mode = "exact".into();
        cfg.kernel.points = vec![vec![0.0]];
        let csv = kernel_csv(&cfg).unwrap();
        let rs = cfg.root_system().unwrap();
        let k = CentralKernel::new(&rs, RadialMultiplier::BumpV, 10.0).unwrap();
        let last = csv.lines().last().unwrap();
        let v: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
        assert!((v - k.at_identity()).abs() < 1e-9 * k.at_identity().abs());
    }
}
