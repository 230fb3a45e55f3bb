use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use reportsup::components::{Connectivity, SizeMode};
use reportsup::fitter::{
    ablation_csv, ablation_run, fit, fit_case_from_spec, gradcheck, FitCase, GradcheckOptions, LogitField, Objective,
    Subset, Terms, FIT_SHELL,
};
use reportsup::grid::{AnatomyMasks, ProbMaps, VoxelGrid};
use reportsup::loss::{report_loss, LossConfig, Variant};
use reportsup::phantom::{anatomy_masks, bundled_suite, generate, ground_truth_probmaps, random_suite, PhantomSpec};
use reportsup::report::{parse_report_text, CueSet, Lexicon};
use reportsup::vgr::{read_grid, write_grid};

use crate::error::CliError;
use crate::{human, note, Cli, Command};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Parse { report, lexicon, out } => cmd_parse(cli, report, lexicon.as_deref(), out.as_deref()),
        Command::Eval { maps, masks, cues } => cmd_eval(cli, maps, masks, cues),
        Command::Gradcheck {
            n_coords,
            configs,
            dims,
            corrupt_gradient,
        } => cmd_gradcheck(cli, *n_coords as usize, *configs as usize, *dims as usize, *corrupt_gradient),
        Command::Fit {
            cues,
            phantom,
            masks,
            dims,
            steps,
            lr,
            terms,
        } => cmd_fit(cli, cues.as_deref(), *phantom, masks, *dims as usize, *steps, *lr, terms),
        Command::Phantom {
            out,
            manifest,
            bundled,
            count,
        } => cmd_phantom(cli, out, manifest.as_deref(), *bundled, *count),
        Command::Ablate {
            manifest,
            limit,
            steps,
            lr,
        } => cmd_ablate(cli, manifest.as_deref(), *limit, *steps, *lr),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Config file first, then flag overrides.
fn loss_config(cli: &Cli) -> Result<LossConfig> {
    let mut cfg = match &cli.config {
        Some(path) => LossConfig::from_json(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => LossConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(tau) = o.tau {
        cfg.tau = tau;
    }
    if let Some(n) = o.connectivity {
        cfg.connectivity = Connectivity::from_number(n)
            .ok_or_else(|| CliError::Usage(format!("--connectivity must be 6 or 26, got {n}")))?;
    }
    match o.variant.as_deref() {
        Some("hard") => cfg.variant = Variant::Hard,
        Some("soft") => cfg.variant = Variant::Soft,
        _ => {}
    }
    match o.size_mode.as_deref() {
        Some("max-extent") => cfg.size_mode = SizeMode::MaxExtent,
        Some("volume") => cfg.size_mode = SizeMode::Volume,
        _ => {}
    }
    if o.size_one_sided {
        cfg.size_one_sided = true;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn read_cues(path: &Path) -> Result<CueSet> {
    CueSet::from_json(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_masks(paths: &[PathBuf]) -> Result<AnatomyMasks> {
    let dural = read_grid(&paths[0])?;
    let parench = read_grid(&paths[1])?;
    Ok(AnatomyMasks::from_f32(&dural, &parench)?)
}

fn read_manifest(path: &Path) -> Result<Vec<PhantomSpec>> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_parse(cli: &Cli, report: &Path, lexicon: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let lex = match lexicon {
        Some(p) => Lexicon::from_json(&read_text(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => Lexicon::default(),
    };
    let text = read_text(report)?;
    let cues = parse_report_text(&text, &lex).map_err(|e| CliError::Input(format!("{}: {e}", report.display())))?;
    let json = cues.to_json();
    match out {
        Some(p) => write_text(p, &json)?,
        None => print!("{json}"),
    }
    human(
        cli,
        format!(
            "{} qualitative cue(s), count {:?}, cohort {:?}",
            cues.qual_cues.len(),
            cues.quant.min_count,
            cues.cohort.cohort
        ),
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, maps: &[PathBuf], masks: &[PathBuf], cues: &Path) -> Result<()> {
    let cfg = loss_config(cli)?;
    let [et, ed, tc] = [0, 1, 2].map(|k| read_grid(&maps[k]));
    let probs = ProbMaps::new(et?, ed?, tc?)?;
    probs.validate()?;
    let masks = read_masks(masks)?;
    let cues = read_cues(cues)?;
    let breakdown = report_loss(&cues, &probs, &masks, &cfg.weights, &cfg)?;
    print!("{}", to_json(&breakdown));
    human(
        cli,
        format!(
            "report_total {:.6} (exist {:.6}, size {:.6}, count {:.6}, prior {:.6})",
            breakdown.report_total,
            breakdown.exist_per_class.sum(),
            breakdown.size,
            breakdown.count,
            breakdown.prior
        ),
    );
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, n_coords: usize, configs: usize, dims: usize, corrupt: bool) -> Result<()> {
    let opts = GradcheckOptions {
        seed: cli.seed,
        n_coords,
        n_configs: configs,
        dims: [dims; 3],
        loss: loss_config(cli)?,
        corrupt_gradient: corrupt,
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&opts);
    print!("{}", to_json(&report));
    human(
        cli,
        format!(
            "max relative error {:.3e} over {} coordinates in {} configurations",
            report.max_rel_error, report.coords_checked, report.configs
        ),
    );
    if report.passed {
        return Ok(());
    }
    let worst = match &report.worst {
        Some(w) => format!(
            "max relative error {:.3e} at config {}, voxel {:?}, class {} (analytic {:.6e}, numeric {:.6e})",
            w.rel_error, w.config, w.voxel, w.class, w.analytic, w.numeric
        ),
        None => "no coordinate could be checked".to_string(),
    };
    Err(CliError::Gradcheck(worst))
}

fn parse_terms(s: &str) -> Result<Terms> {
    let mut t = Terms::NONE;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "exist" => t.exist = true,
            "global" | "count" => t.count = true,
            "prior" => t.prior = true,
            "none" => {}
            other => return Err(CliError::Usage(format!("unknown loss term {other:?}"))),
        }
    }
    Ok(t)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    cli: &Cli,
    cues: Option<&Path>,
    phantom: Option<usize>,
    masks: &[PathBuf],
    dims: usize,
    steps: usize,
    lr: f64,
    terms: &str,
) -> Result<()> {
    let cfg = loss_config(cli)?;
    let terms = parse_terms(terms)?;
    let case = match (cues, phantom) {
        (_, Some(i)) => {
            let suite = bundled_suite();
            let spec = suite
                .get(i)
                .ok_or_else(|| CliError::Usage(format!("--phantom {i} out of range (suite has {})", suite.len())))?;
            fit_case_from_spec(spec, &Lexicon::default()).map_err(|e| CliError::Input(e.to_string()))?
        }
        (Some(path), None) => {
            let cues = read_cues(path)?;
            let masks = if masks.is_empty() {
                anatomy_masks([dims; 3], [1.0; 3], FIT_SHELL)
            } else {
                read_masks(masks)?
            };
            let field0 = LogitField::uniform(masks.dims(), masks.dural.spacing(), cli.seed)?;
            FitCase { cues, masks, field0 }
        }
        (None, None) => return Err(CliError::Usage("one of --cues or --phantom is required".into())),
    };
    let obj = Objective::new(&case.cues, &case.masks, &cfg.weights, &cfg, terms);
    let report = fit(&case.field0, &obj, steps, lr)?;
    print!("{}", to_json(&report));
    let s = &report.constraint_status;
    human(
        cli,
        format!(
            "{} iterations, final loss {:.6e}, all constraints satisfied: {} (components {}, prior {:.3e} of {:.3e})",
            report.iterations,
            report.loss_trace.last().copied().unwrap_or(f64::NAN),
            s.all_satisfied,
            s.component_count,
            s.prior_value,
            s.prior_initial
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct IndexEntry {
    id: String,
    cohort: String,
    lesions: usize,
    largest_extents_mm: [f64; 3],
    files: Vec<String>,
}

fn to_f32(g: &VoxelGrid<u8>) -> VoxelGrid<f32> {
    g.map(f32::from)
}

fn cmd_phantom(cli: &Cli, out: &Path, manifest: Option<&Path>, bundled: bool, count: usize) -> Result<()> {
    let specs = match (manifest, bundled) {
        (Some(p), _) => read_manifest(p)?,
        (None, true) => bundled_suite(),
        (None, false) => {
            if count == 0 {
                return Err(CliError::Usage("--count must be at least 1".into()));
            }
            random_suite(cli.seed, count)
        }
    };
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_text(&out.join("manifest.json"), &to_json(&specs))?;
    let mut index = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let ph = generate(spec).map_err(|e| CliError::Input(format!("phantom {i}: {e}")))?;
        let id = format!("phantom_{i:03}");
        let dir = out.join(&id);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let gt = ground_truth_probmaps(&ph.labels);
        let grids = [
            ("labels.vgr", to_f32(&ph.labels)),
            ("et.vgr", gt.et),
            ("ed.vgr", gt.ed),
            ("tc.vgr", gt.tc),
            ("dural.vgr", to_f32(&ph.masks.dural)),
            ("parench.vgr", to_f32(&ph.masks.parench)),
        ];
        let mut files = Vec::new();
        for (name, grid) in &grids {
            write_grid(grid, dir.join(name))?;
            files.push(format!("{id}/{name}"));
        }
        write_text(&dir.join("report.txt"), &ph.report.to_text())?;
        files.push(format!("{id}/report.txt"));
        index.push(IndexEntry {
            id,
            cohort: format!("{:?}", spec.cohort),
            lesions: spec.lesions.len(),
            largest_extents_mm: ph.largest_extents_mm,
            files,
        });
    }
    let json = to_json(&index);
    write_text(&out.join("index.json"), &json)?;
    print!("{json}");
    note(cli, format!("wrote {} phantom(s) to {}", index.len(), out.display()));
    Ok(())
}

fn cmd_ablate(cli: &Cli, manifest: Option<&Path>, limit: Option<usize>, steps: usize, lr: f64) -> Result<()> {
    let cfg = loss_config(cli)?;
    let mut specs = match manifest {
        Some(p) => read_manifest(p)?,
        None => bundled_suite(),
    };
    if let Some(n) = limit {
        specs.truncate(n);
    }
    let lex = Lexicon::default();
    let cases = specs
        .iter()
        .enumerate()
        .map(|(i, s)| fit_case_from_spec(s, &lex).map_err(|e| CliError::Input(format!("phantom {i}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let rows = ablation_run(&cases, &Subset::CUMULATIVE, &cfg.weights, &cfg, steps, lr)?;
    print!("{}", ablation_csv(&rows));
    for r in &rows {
        human(
            cli,
            format!("{:<20} {:>5.1}% satisfied, mean loss {:.4e}", r.subset, 100.0 * r.satisfied_fraction, r.mean_final_loss),
        );
    }
    Ok(())
}
