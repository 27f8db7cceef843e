use std::fmt::Write as _;

use nilheat::diffusion::{self, Scheme, SimConfig};
use nilheat::kernel::{self, QuadratureConfig};
use nilheat::propagator::{assemble_hamiltonian, default_mode_count, spectrum, ThetaGrid};
use nilheat::validation::{self, Suite};
use nilheat::{GroupPoint, GroupTag, QuarticParams};
use serde_json::{json, Value};

use crate::config::{self, McFile};
use crate::output::{csv_preamble, emit, num, to_map, SCHEMA};
use crate::{Failure, Format, KernelArgs, McArgs, PropagatorArgs, ValidateArgs};

fn floats(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| Failure::usage(format!("{what}: '{v}' is not a number")))
        })
        .collect()
}

fn positive_time(t: f64) -> Result<f64, Failure> {
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(Failure { code: 2, kind: "contract", message: format!("time must be positive, got {t}") })
    }
}

fn group(s: &str) -> Result<GroupTag, Failure> {
    s.parse().map_err(Failure::from)
}

pub fn kernel(a: KernelArgs) -> Result<u8, Failure> {
    let tag = group(&a.group)?;
    let times = floats(&a.time, "--time")?.into_iter().map(positive_time).collect::<Result<Vec<_>, _>>()?;
    let mut points = Vec::new();
    for p in &a.points {
        let c = floats(p, "--point")?;
        if c.len() != tag.dim() {
            return Err(Failure::usage(format!(
                "point '{p}' has {} coordinates, {} needs {} (usage: kernel --group g4|g5 --point x1,..,xN --time t)",
                c.len(),
                tag.name(),
                tag.dim()
            )));
        }
        points.push(GroupPoint::new(tag, &c)?);
    }
    let mut table = config::load_table(a.config.as_deref())?;
    for s in &a.sets {
        config::apply_set(&mut table, s)?;
    }
    let cfg: QuadratureConfig = config::decode(table)?;
    cfg.validate()?;

    let mut echo = to_map(cfg);
    echo.insert("group".into(), tag.name().into());
    echo.insert("command".into(), "kernel".into());

    let mut rows = Vec::new();
    for &t in &times {
        let results = kernel::heat_kernel_batch(&points, t, &cfg)?;
        for (p, r) in points.iter().zip(results) {
            rows.push((t, p.coords().to_vec(), r));
        }
    }

    let text = match a.output.format {
        Format::Csv => {
            let mut s = csv_preamble(&echo);
            let coords: Vec<String> = (1..=tag.dim()).map(|i| format!("x{i}")).collect();
            let _ = writeln!(
                s,
                "group,t,{},value,imag_residual,tail_estimate,node_count,wall_ms",
                coords.join(",")
            );
            for (t, c, r) in &rows {
                let c: Vec<String> = c.iter().map(|v| num(*v)).collect();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    tag.name(),
                    num(*t),
                    c.join(","),
                    num(r.value),
                    num(r.imag_residual),
                    num(r.tail_estimate),
                    r.node_count,
                    r.wall_time.as_millis()
                );
            }
            s
        }
        Format::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|(t, c, r)| {
                    json!({
                        "group": tag.name(), "t": t, "point": c, "value": r.value,
                        "imag_residual": r.imag_residual, "tail_estimate": r.tail_estimate,
                        "node_count": r.node_count, "wall_ms": r.wall_time.as_millis() as u64,
                        "tail_exceeded": r.tail_exceeded,
                    })
                })
                .collect();
            json_text(json!({ "schema": SCHEMA, "config": echo, "rows": rows }))
        }
    };
    let flagged = rows.iter().filter(|(_, _, r)| r.tail_exceeded).count();
    if flagged > 0 {
        eprintln!("warning: {flagged} result(s) with tail estimate above the tolerance");
    }
    emit(a.output.out.as_deref(), text.as_bytes())?;
    Ok(0)
}

fn json_text(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).unwrap_or_default();
    s.push('\n');
    s
}

pub fn propagator(a: PropagatorArgs) -> Result<u8, Failure> {
    let t = positive_time(a.time)?;
    let g = floats(&a.grid, "--grid")?;
    let (l, n) = match g[..] {
        [l, n] if n.fract() == 0.0 && n >= 2.0 => (l, n as usize),
        _ => return Err(Failure::usage(format!("--grid expects L,n with integer n >= 2, got '{}'", a.grid))),
    };
    if a.stride == 0 {
        return Err(Failure::usage("--stride must be at least 1"));
    }
    let grid = ThetaGrid::new(l, n)?;
    let params = QuarticParams::new(a.alpha, a.beta)?;
    let h = assemble_hamiltonian(&params, &grid);
    let modes = default_mode_count(&h, t)?.max(10).min(n);
    let dec = spectrum(&h, modes)?;
    let values = dec.kernel_matrix(t, a.stride)?;
    let nodes: Vec<f64> = (0..n).step_by(a.stride).map(|j| grid.node(j)).collect();
    let energies: Vec<f64> = dec.energies.iter().take(10).copied().collect();
    let tail = dec.tail_bound(t);

    let echo = to_map(json!({
        "command": "propagator", "alpha": a.alpha, "beta": a.beta, "time": t,
        "half_width": l, "nodes": n, "stride": a.stride, "modes": dec.energies.len(),
        "tail_bound": tail,
    }));
    let m = nodes.len();
    let text = match a.output.format {
        Format::Csv => {
            let mut s = csv_preamble(&echo);
            let names: Vec<String> = (0..energies.len()).map(|k| format!("E{k}")).collect();
            let vals: Vec<String> = energies.iter().map(|e| num(*e)).collect();
            let _ = writeln!(s, "{}", names.join(","));
            let _ = writeln!(s, "{}", vals.join(","));
            s.push_str("theta,theta_bar,value\n");
            for i in 0..m {
                for j in 0..m {
                    let _ = writeln!(s, "{},{},{}", num(nodes[i]), num(nodes[j]), num(values[i * m + j]));
                }
            }
            s
        }
        Format::Json => json_text(json!({
            "schema": SCHEMA, "config": echo, "energies": energies,
            "theta": nodes, "values": values.chunks(m).collect::<Vec<_>>(),
        })),
    };
    emit(a.output.out.as_deref(), text.as_bytes())?;
    Ok(0)
}

pub fn mc(a: McArgs) -> Result<u8, Failure> {
    let file: McFile = config::decode(config::load_table(a.config.as_deref())?)?;
    let tag = group(
        a.group.as_deref().or(file.group.as_deref()).ok_or_else(|| Failure::usage("mc needs --group"))?,
    )?;
    let t = positive_time(a.time.or(file.time).ok_or_else(|| Failure::usage("mc needs --time"))?)?;
    let scheme: Scheme = match a.scheme.as_deref().or(file.scheme.as_deref()) {
        Some(s) => s.parse()?,
        None => Scheme::ItoCorrected,
    };
    let cfg = SimConfig::new(
        tag,
        t,
        a.paths.or(file.paths).unwrap_or(100_000),
        a.steps.or(file.steps).unwrap_or(400),
        a.seed.or(file.seed).unwrap_or(0),
    )
    .with_scheme(scheme);
    cfg.validate()?;
    let samples = diffusion::simulate(&cfg)?;
    let moments = diffusion::moments(&samples);

    let mut echo = to_map(cfg);
    echo.insert("command".into(), "mc".into());
    echo.insert("tag".into(), tag.name().into());
    let text = match a.output.format {
        Format::Csv => {
            let mut s = csv_preamble(&echo);
            s.push_str("# summary coordinate,mean,mean_se,var,var_se\n");
            for (j, m) in moments.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "# summary x{},{},{},{},{}",
                    j + 1,
                    num(m.mean),
                    num(m.mean_se),
                    num(m.var),
                    num(m.var_se)
                );
            }
            let mut buf = s.into_bytes();
            samples.write_csv(&mut buf).map_err(|e| Failure::output(e.to_string()))?;
            String::from_utf8(buf).unwrap_or_default()
        }
        Format::Json => {
            let summary: Vec<Value> = moments
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    json!({ "coordinate": format!("x{}", j + 1), "mean": m.mean,
                    "mean_se": m.mean_se, "var": m.var, "var_se": m.var_se })
                })
                .collect();
            let rows: Vec<&[f64]> = (0..samples.len()).map(|i| samples.coords(i)).collect();
            json_text(json!({ "schema": SCHEMA, "config": echo, "summary": summary, "samples": rows }))
        }
    };
    emit(a.output.out.as_deref(), text.as_bytes())?;
    Ok(0)
}

pub fn validate(a: ValidateArgs) -> Result<u8, Failure> {
    let suites = Suite::parse_selection(&a.suite)?;
    let mut reports = Vec::new();
    for s in suites {
        let r = validation::run(s);
        print!("{}", r.table());
        println!(
            "{}  {}  {} checks in {:.1} s",
            if r.passed() { "PASS" } else { "FAIL" },
            r.suite,
            r.checks.len(),
            r.wall_seconds
        );
        reports.push(r);
    }
    let passed = reports.iter().all(|r| r.passed());
    let text = json_text(json!({ "schema": SCHEMA, "passed": passed, "suites": reports }));
    emit(Some(&a.report), text.as_bytes())?;
    Ok(if passed { 0 } else { 1 })
}
