use proptest::prelude::*;

use compact_wave::grid::{Field, Mesh};
use compact_wave::harness::{error_norms, ConvergenceTable, ErrorTriple};
use compact_wave::medium::{sigma_k_effective, SigmaVariant};
use compact_wave::operators::{dominance_check, sk_apply, sk_line_coefficients, sk_line_coefficients_for, DominanceStatus};
use compact_wave::output::{decode_field, encode_field, parse_table_csv, render_table, FieldFormat, TableFormat};
use compact_wave::tridiag::{line_residual, solve_line, LineSystem};

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    prop::collection::vec(2usize..6, 1..=3).prop_map(|cells| {
        let domain: Vec<(f64, f64)> = cells.iter().map(|_| (0.0, 1.0)).collect();
        Mesh::uniform(&domain, &cells).unwrap()
    })
}

fn field_on(mesh: &Mesh, seed: u64) -> Field {
    let values = (0..mesh.node_count()).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 37.0 - 10.0).collect();
    Field::from_values(mesh, values).unwrap()
}

fn line_system() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
    (2usize..=16).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..10.0, n),
            prop::collection::vec(0.1f64..10.0, n + 1),
            prop::collection::vec(-1.0f64..1.0, n - 1),
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
    })
}

proptest! {
    #[test]
    fn lines_cover_each_node_once(mesh in mesh_strategy()) {
        for k in 0..mesh.dim() {
            let mut hits = vec![0u8; mesh.node_count()];
            for line in mesh.lines(k) {
                for i in 0..line.len {
                    hits[line.node(i)] += 1;
                }
            }
            prop_assert!(hits.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn line_view_round_trip(mesh in mesh_strategy(), seed in 0u64..1000) {
        let f = field_on(&mesh, seed);
        let mut g = Field::zeros(&mesh);
        for k in 0..mesh.dim() {
            for line in mesh.lines(k) {
                let fixed: Vec<usize> = (0..mesh.dim()).filter(|&l| l != k).map(|l| line.fixed[l]).collect();
                let values = f.line_view(&mesh, k, &fixed).unwrap();
                prop_assert_eq!(values.len(), mesh.axis(k).nodes());
                g.write_line(&mesh, k, &fixed, &values).unwrap();
            }
            prop_assert_eq!(&g, &f);
        }
    }

    #[test]
    fn reversed_line_gives_reversed_solution((half, eff, rhs, wl, wr) in line_system()) {
        let co = sk_line_coefficients(&half, &eff).unwrap();
        let w = solve_line(&LineSystem { coeffs: &co, rhs: &rhs, w_left: wl, w_right: wr }).unwrap();

        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        let co_r = sk_line_coefficients(&rev(&half), &rev(&eff)).unwrap();
        let w_r = solve_line(&LineSystem { coeffs: &co_r, rhs: &rev(&rhs), w_left: wr, w_right: wl }).unwrap();
        let scale = w.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in w.iter().zip(w_r.iter().rev()) {
            prop_assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn solution_satisfies_the_line_equations((half, eff, rhs, wl, wr) in line_system()) {
        let co = sk_line_coefficients_for(SigmaVariant::Nodal, &half, &eff).unwrap();
        let w = solve_line(&LineSystem { coeffs: &co, rhs: &rhs, w_left: wl, w_right: wr }).unwrap();
        let mut full = vec![wl];
        full.extend(&w);
        full.push(wr);
        let scale = full.iter().chain(&rhs).fold(1.0_f64, |m, v| m.max(v.abs()));
        prop_assert!(line_residual(&co, &full, &rhs) <= 1e-11 * scale * co.beta.iter().fold(1.0_f64, |m, b| m.max(b.abs())));
        let applied = sk_apply(&co, &full).unwrap();
        for (a, r) in applied.iter().zip(&rhs) {
            prop_assert!((a - r).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn dense_matrix_is_symmetric((half, eff, _rhs, _wl, _wr) in line_system()) {
        let a = sk_line_coefficients(&half, &eff).unwrap().dense();
        for i in 0..a.len() {
            for j in 0..a.len() {
                prop_assert_eq!(a[i][j].to_bits(), a[j][i].to_bits());
            }
        }
    }

    #[test]
    fn harmonic_lines_are_strictly_dominant(half in prop::collection::vec(0.01f64..100.0, 2..=16)) {
        let n = half.len();
        let mut eff = vec![1.0; n + 1];
        for i in 1..n {
            eff[i] = sigma_k_effective(half[i - 1], half[i], 1.0, SigmaVariant::Harmonic).unwrap();
        }
        let co = sk_line_coefficients_for(SigmaVariant::Harmonic, &half, &eff).unwrap();
        prop_assert_eq!(dominance_check(&co).status, DominanceStatus::StrictEverywhere);
    }

    #[test]
    fn norm_ordering(mesh in mesh_strategy(), s1 in 0u64..1000, s2 in 0u64..1000, ht in 0.001f64..1.0) {
        let v = field_on(&mesh, s1);
        let u = field_on(&mesh, s2);
        let z = Field::zeros(&mesh);
        let e = error_norms(&mesh, &v, &z, &u, &z, ht).unwrap();
        prop_assert!(e.e_c >= 0.0 && e.e_c10 >= 0.0);
        prop_assert!(e.e_c1 >= e.e_c10);
    }

    #[test]
    fn table_rates_are_consistent(errs in prop::collection::vec((1e-12f64..1.0, 1e-12f64..1.0, 1e-12f64..1.0), 1..6)) {
        let runs: Vec<(usize, usize, ErrorTriple)> = errs
            .iter()
            .enumerate()
            .map(|(l, &(a, b, c))| (5 << l, 20 << l, ErrorTriple { e_c: a, e_c10: b, e_c1: c.max(b) }))
            .collect();
        let t = ConvergenceTable::from_errors("p", None, &runs);
        prop_assert!(t.rows[0].rates.iter().all(Option::is_none));
        for j in 1..t.rows.len() {
            let prev = runs[j - 1].2.as_array();
            let cur = runs[j].2.as_array();
            for c in 0..3 {
                let rate = t.rows[j].rates[c].unwrap();
                prop_assert!((rate.r - prev[c] / cur[c]).abs() <= 1e-12 * rate.r);
                prop_assert!((rate.p - rate.r.log2()).abs() <= 1e-12 * rate.p.abs().max(1.0));
            }
        }

        let parsed = parse_table_csv(&render_table(&t, TableFormat::Csv).unwrap()).unwrap();
        prop_assert_eq!(parsed.len(), runs.len());
        for (rec, (n, m, e)) in parsed.iter().zip(&runs) {
            prop_assert_eq!((rec.n, rec.m), (*n, *m));
            for (c, v) in e.as_array().iter().enumerate() {
                let printed = rec.values[3 * c].unwrap();
                prop_assert!((printed - v).abs() <= 5e-4 * v);
            }
        }
    }

    #[test]
    fn binary_field_round_trip(mesh in mesh_strategy(), seed in 0u64..1000) {
        let f = field_on(&mesh, seed);
        let (nodes, values) = decode_field(&encode_field(&f, FieldFormat::FlatBinary).unwrap()).unwrap();
        prop_assert_eq!(nodes, mesh.axes().iter().map(|a| a.nodes()).collect::<Vec<_>>());
        prop_assert!(values.iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
