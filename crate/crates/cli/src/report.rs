use std::path::Path;

use coremarket::dispatch::{Coalition, CoalitionValues};
use coremarket::mechanisms::{CoreDescription, Mechanism, MpcsOptions, PaymentOutcome};
use coremarket::MarketInstance;

use crate::clear::{clear, Cleared};
use crate::format;
use crate::{Failure, Selection};

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

/// Plain decimal text; `-0` prints as `0`.
fn num(v: f64) -> String {
    (v + 0.0).to_string()
}

fn outcomes(c: &Cleared) -> Vec<(Mechanism, &PaymentOutcome)> {
    c.report
        .entries
        .iter()
        .filter_map(|e| e.outcome.as_ref().ok().map(|o| (e.mechanism, o)))
        .collect()
}

fn matrix(
    inst: &MarketInstance,
    outs: &[(Mechanism, &PaymentOutcome)],
    pick: impl Fn(&PaymentOutcome, usize) -> f64,
) -> (Vec<String>, Vec<Vec<String>>) {
    let header = std::iter::once("bidder".to_string())
        .chain(outs.iter().map(|(m, _)| m.to_string()))
        .collect();
    let rows = if outs.is_empty() {
        Vec::new()
    } else {
        inst.bidders
            .iter()
            .enumerate()
            .map(|(l, b)| {
                std::iter::once(b.id.clone())
                    .chain(outs.iter().map(|(_, o)| num(pick(o, l))))
                    .collect()
            })
            .collect()
    };
    (header, rows)
}

/// Vertices of `{(x, y) : a·(x, y) ≤ b}`, counter-clockwise.
pub fn polygon(halfplanes: &[([f64; 2], f64)]) -> Vec<[f64; 2]> {
    let tol = 1e-9;
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for (i, (a, b)) in halfplanes.iter().enumerate() {
        for (c, d) in &halfplanes[i + 1..] {
            let det = a[0] * c[1] - a[1] * c[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let p = [(b * c[1] - a[1] * d) / det, (a[0] * d - b * c[0]) / det];
            let scale = p[0].abs().max(p[1].abs()).max(1.0);
            let inside = halfplanes
                .iter()
                .all(|(e, f)| e[0] * p[0] + e[1] * p[1] <= f + tol * scale.max(f.abs()));
            if inside && !pts.iter().any(|q| (q[0] - p[0]).abs() + (q[1] - p[1]).abs() < 1e-9 * scale) {
                pts.push(p);
            }
        }
    }
    if pts.len() > 2 {
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
        pts.sort_by(|p, q| {
            let ap = (p[1] - cy).atan2(p[0] - cx);
            let aq = (q[1] - cy).atan2(q[0] - cx);
            ap.total_cmp(&aq)
        });
    }
    pts
}

/// Core cross-section in the `(u_i, u_j)` plane with the other bidders
/// held at `fixed`, using the cap form `Σ_{l∉S} u_l ≤ J(B_S) − J(B)`.
fn section(core: &CoreDescription, fixed: &[f64], i: usize, j: usize) -> Vec<[f64; 2]> {
    let n = core.num_bidders;
    let full = Coalition::full(n);
    let mut hp = vec![([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.0)];
    for &(s, v) in &core.rows {
        if v.is_infinite() {
            continue;
        }
        let out = full.difference(s);
        let a = [f64::from(u8::from(out.contains(i))), f64::from(u8::from(out.contains(j)))];
        let rest: f64 = out.members().filter(|&k| k != i && k != j).map(|k| fixed[k]).sum();
        let b = v - core.objective - rest;
        if a == [0.0, 0.0] {
            if b < -1e-9 * core.objective.abs().max(1.0) {
                return Vec::new();
            }
            continue;
        }
        hp.push((a, b));
    }
    polygon(&hp)
}

pub fn run(inst: &MarketInstance, selection: &Selection, opts: &MpcsOptions, dir: &Path) -> Result<(), Failure> {
    let cleared = clear(inst, selection, opts)?;
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let outs = outcomes(&cleared);

    let (h, rows) = matrix(inst, &outs, |o, l| o.payments[l]);
    write_csv(&dir.join("payments.csv"), &h, &rows)?;

    let (h, mut rows) = matrix(inst, &outs, |o, l| o.utilities[l]);
    if !outs.is_empty() {
        rows.push(
            std::iter::once("operator".to_string())
                .chain(outs.iter().map(|(_, o)| num(o.operator_utility)))
                .collect(),
        );
    }
    write_csv(&dir.join("utilities.csv"), &h, &rows)?;

    let header: Vec<String> = ["bidder_i", "bidder_j", "vertex", "u_i", "u_j"].map(String::from).to_vec();
    let mut rows = Vec::new();
    if let Some((_, mpcs)) = outs.iter().find(|(m, _)| *m == Mechanism::Mpcs) {
        let values = CoalitionValues::new(inst);
        match CoreDescription::enumerate(&values, opts.separation_limit) {
            Ok(core) => {
                let n = inst.num_bidders();
                for i in 0..n {
                    for j in i + 1..n {
                        for (k, p) in section(&core, &mpcs.utilities, i, j).iter().enumerate() {
                            rows.push(vec![
                                inst.bidders[i].id.clone(),
                                inst.bidders[j].id.clone(),
                                k.to_string(),
                                num(p[0]),
                                num(p[1]),
                            ]);
                        }
                    }
                }
            }
            Err(e) => eprintln!("warning: core sections skipped: {e}"),
        }
    }
    write_csv(&dir.join("core_section.csv"), &header, &rows)?;

    let header: Vec<String> = ["iteration", "violation", "added"]
        .map(String::from)
        .into_iter()
        .chain(inst.bidders.iter().map(|b| format!("u_{}", b.id)))
        .collect();
    let rows: Vec<Vec<String>> = cleared
        .report
        .generation
        .iter()
        .flat_map(|g| &g.steps)
        .map(|s| {
            [
                s.iteration.to_string(),
                num(s.violation),
                s.added.map(|c| format::coalition(inst, c)).unwrap_or_default(),
            ]
            .into_iter()
            .chain(s.utilities.iter().map(|&u| num(u)))
            .collect()
        })
        .collect();
    write_csv(&dir.join("generation.csv"), &header, &rows)?;

    println!(
        "wrote payments.csv, utilities.csv, core_section.csv, generation.csv to {}",
        dir.display()
    );
    match cleared.failure() {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square() {
        let hp = [([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.0), ([1.0, 0.0], 1.0), ([0.0, 1.0], 1.0)];
        let v = polygon(&hp);
        assert_eq!(v, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn triangle_with_redundant_row() {
        let hp = [
            ([-1.0, 0.0], 0.0),
            ([0.0, -1.0], 0.0),
            ([1.0, 1.0], 2.0),
            ([1.0, 0.0], 5.0),
        ];
        assert_eq!(polygon(&hp).len(), 3);
    }
}
