use std::f64::consts::PI;

use confspec::certify::{certificate, yang_yau_bound, CertifyOptions};
use confspec::eigen::{solve_first_cluster, EigenOptions};
use confspec::fem::{assemble_mass, assemble_stiffness, DensityField, Floor, MassMode};
use confspec::frame::select_frame;
use confspec::maximizer::{
    ascent_step, evaluate, maximize, AscentConfig, InitialDensity, RunStatus,
};
use confspec::mesh::{gen_flat_torus, gen_icosphere, TriangleMesh, EQUILATERAL_LATTICE};

fn certify_density(mesh: &TriangleMesh, density: &DensityField) -> confspec::certify::Certificate {
    let spec = solve_first_cluster(
        &assemble_stiffness(mesh),
        &assemble_mass(mesh, density, MassMode::Consistent),
        &EigenOptions::with_k(8),
    )
    .unwrap();
    let frame = select_frame(
        mesh,
        &spec.first_cluster_basis(),
        spec.first_cluster_value(),
    )
    .unwrap();
    certificate(mesh, density, &spec, &frame, &CertifyOptions::default()).unwrap()
}

#[test]
fn certificate_is_bitwise_deterministic() {
    let mesh = gen_icosphere(2).unwrap();
    let mu = DensityField::uniform(&mesh, Floor::Zero, 64.0 / mesh.area()).unwrap();
    assert_eq!(
        certify_density(&mesh, &mu).to_json(),
        certify_density(&mesh, &mu).to_json()
    );
}

#[test]
fn first_iterate_certifies_worse_than_the_endpoint() {
    let mesh = gen_icosphere(3).unwrap();
    let config = AscentConfig::default();
    let result = maximize(
        &mesh,
        &InitialDensity::Random(21),
        &config,
        &CertifyOptions::default(),
    )
    .unwrap();
    assert_eq!(result.trace.status, RunStatus::Converged);
    let raw = InitialDensity::Random(21).values(&mesh).unwrap();
    let start = confspec::maximizer::project_density(
        &mesh,
        &raw,
        config.floor,
        config.n_schedule[0] / mesh.area(),
    )
    .unwrap();
    let first = certify_density(&mesh, &start);
    let end = &result.certificate;
    assert!(
        first.density_recovery_L1 > end.density_recovery_L1,
        "{} vs {}",
        first.density_recovery_L1,
        end.density_recovery_L1
    );
    assert!(first.harmonic_weak_residual > end.harmonic_weak_residual);
}

#[test]
fn perturbed_sphere_density_strictly_improves() {
    let mesh = gen_icosphere(3).unwrap();
    let pos = mesh.embedding().unwrap().to_vec();
    let a = mesh.area();
    let values: Vec<f64> = pos.iter().map(|p| (1.0 + 0.5 * p[2]) / a).collect();
    let config = AscentConfig::default();
    let stiffness = assemble_stiffness(&mesh);
    let mu = DensityField::normalized(&mesh, values, Floor::Zero, 64.0 / a).unwrap();
    let state = evaluate(&mesh, &stiffness, mu, &config).unwrap();
    let out = ascent_step(&mesh, &stiffness, &state, &config).unwrap();
    assert!(out.accepted);
    assert!(out.state.spectrum.lambda1() > state.spectrum.lambda1() * (1.0 + 1e-4));
}

#[test]
fn maximizer_outputs_respect_the_genus_bounds() {
    let config = AscentConfig::default();
    let cases = [
        (gen_icosphere(2).unwrap(), InitialDensity::Random(8)),
        (
            gen_flat_torus(EQUILATERAL_LATTICE, 16, 16).unwrap(),
            InitialDensity::Uniform,
        ),
        (
            gen_flat_torus(EQUILATERAL_LATTICE, 12, 12).unwrap(),
            InitialDensity::Random(9),
        ),
    ];
    for (mesh, init) in cases {
        let out = maximize(&mesh, &init, &config, &CertifyOptions::default()).unwrap();
        let bound = yang_yau_bound(mesh.genus());
        for r in &out.trace.records {
            assert!(
                r.lambda1_area <= bound * 1.02,
                "{} > {}",
                r.lambda1_area,
                bound
            );
        }
        let cert = &out.certificate;
        assert!(cert.bounds.yang_yau_ok);
        assert!(cert.bounds.hersch_floor_ok, "{}", cert.lambda1_area);
        assert!(cert.lambda1_area >= 8.0 * PI * 0.98);
    }
}

#[test]
fn equilateral_torus_uniform_density_is_stationary() {
    let mesh = gen_flat_torus(EQUILATERAL_LATTICE, 16, 16).unwrap();
    let out = maximize(
        &mesh,
        &InitialDensity::Uniform,
        &AscentConfig::default(),
        &CertifyOptions::default(),
    )
    .unwrap();
    let uniform = 1.0 / mesh.area();
    let drift = out
        .density
        .values()
        .iter()
        .map(|v| (v - uniform).abs())
        .fold(0.0, f64::max);
    assert!(drift * mesh.area() < 1e-6, "{drift}");
    assert!((out.certificate.lambda1_area / (8.0 * PI * PI / 3f64.sqrt()) - 1.0).abs() < 0.02);
}

#[test]
fn random_starts_on_the_equilateral_torus_reach_a_common_value() {
    let mesh = gen_flat_torus(EQUILATERAL_LATTICE, 12, 12).unwrap();
    let config = AscentConfig::default();
    let uniform = maximize(
        &mesh,
        &InitialDensity::Uniform,
        &config,
        &CertifyOptions::default(),
    )
    .unwrap()
    .certificate
    .lambda1_area;
    let values: Vec<f64> = (1..=3)
        .map(|seed| {
            let out = maximize(
                &mesh,
                &InitialDensity::Random(seed),
                &config,
                &CertifyOptions::default(),
            )
            .unwrap();
            assert_eq!(out.trace.status, RunStatus::Converged);
            out.certificate.lambda1_area
        })
        .collect();
    for v in &values {
        assert!((v / values[0] - 1.0).abs() < 1e-5, "{values:?}");
        assert!(*v >= uniform * (1.0 - 1e-6), "{v} < {uniform}");
    }
}
