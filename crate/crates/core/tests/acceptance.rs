//! Acceptance gate. Each criterion runs at its stated tolerance and prints a
//! single PASS/FAIL line followed by its measurements. The process exits 1
//! when any criterion fails.

use std::f64::consts::{PI, SQRT_2};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use dsl::algebra::{Element, Level};
use dsl::fiber::{
    build_cycle, check_pair_inequalities, check_parallel, cycle_intersection_probe,
    fiber_exact_mult, fit_isometry, hopf_raw, hopf_singular_values, min_pair_distance, FiberSample,
};
use dsl::linalg;
use dsl::lipmap::{degree_jacobian, degree_winding, lipschitz_estimate, SphereMap};
use dsl::sphere::{angle, product_dist, rng_for, sample_sphere_stream, SpherePoint};
use dsl::torus::figure::{build_figure, FigureFormat, FigureSpec};
use dsl::torus::{
    f_partials_fd, gamma_integrate, gradient_norm_deviation, grid, projection_dilation_sup,
    wrap_dist,
};

const SEED: u64 = 20_240_601;

struct Measure {
    label: String,
    value: f64,
    relation: &'static str,
    bound: f64,
    ok: bool,
}

#[derive(Default)]
struct Sheet(Vec<Measure>);

impl Sheet {
    fn push(&mut self, label: String, value: f64, relation: &'static str, bound: f64, ok: bool) {
        self.0.push(Measure {
            label,
            value,
            relation,
            bound,
            ok,
        });
    }

    fn below(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.push(label.into(), value, "<", bound, value < bound);
    }

    fn at_most(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.push(label.into(), value, "<=", bound, value <= bound);
    }

    fn above(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.push(label.into(), value, ">", bound, value > bound);
    }

    fn at_least(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.push(label.into(), value, ">=", bound, value >= bound);
    }

    /// `|value − target| <= tol`, recorded as a deviation.
    fn near(&mut self, label: impl Into<String>, value: f64, target: f64, tol: f64) {
        let dev = (value - target).abs();
        self.push(
            format!("|{} - {target:.12}|", label.into()),
            dev,
            "<=",
            tol,
            dev <= tol,
        );
    }

    fn holds(&mut self, label: impl Into<String>, ok: bool) {
        self.push(label.into(), ok as u8 as f64, "==", 1.0, ok);
    }
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn(&mut Sheet),
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "multiplication map has Lipschitz constant sqrt(2)",
            budget: Some(Duration::from_secs(10)),
            run: lipschitz_constant,
        },
        Criterion {
            name: "diagonal square map has degree 2",
            budget: Some(Duration::from_secs(60)),
            run: diagonal_degree,
        },
        Criterion {
            name: "fiber pair inequalities",
            budget: Some(Duration::from_secs(5)),
            run: fiber_inequalities,
        },
        Criterion {
            name: "fibers are graphs of isometries",
            budget: None,
            run: fiber_isometry,
        },
        Criterion {
            name: "fiber parallelism and antipodal separation",
            budget: None,
            run: parallel_fibers,
        },
        Criterion {
            name: "Hopf extension of multiplication",
            budget: None,
            run: hopf_extension,
        },
        Criterion {
            name: "cycle construction between fiber points",
            budget: None,
            run: cycle_construction,
        },
        Criterion {
            name: "torus submersion and figure",
            budget: Some(Duration::from_secs(30)),
            run: torus_counterexample,
        },
        Criterion {
            name: "Cayley-Dickson algebra foundation",
            budget: None,
            run: algebra_foundation,
        },
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let mut sheet = Sheet::default();
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| (c.run)(&mut sheet)));
        let elapsed = start.elapsed();
        let mut ok = outcome.is_ok() && !sheet.0.is_empty() && sheet.0.iter().all(|m| m.ok);
        let timing = match c.budget {
            Some(b) => {
                ok &= elapsed <= b;
                format!("{:.2}s / budget {}s", elapsed.as_secs_f64(), b.as_secs())
            }
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        println!("{} {} ({timing})", if ok { "PASS" } else { "FAIL" }, c.name);
        for m in &sheet.0 {
            let mark = if m.ok { "ok " } else { "BAD" };
            println!(
                "    {mark} {}: {:.6e} {} {:.6e}",
                m.label, m.value, m.relation, m.bound
            );
        }
        if let Err(e) = outcome {
            let msg = e
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| e.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            println!("    BAD aborted: {msg}");
        }
        if !ok {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn exact_fiber(level: Level, p: &SpherePoint, count: usize, stream: u64) -> FiberSample {
    fiber_exact_mult(
        p,
        &sample_sphere_stream(level.sphere_dim(), count, SEED, stream),
    )
    .unwrap()
}

fn lipschitz_constant(sheet: &mut Sheet) {
    for level in Level::SPHERES {
        let n = level.sphere_dim();
        let est =
            lipschitz_estimate(&SphereMap::multiplication(level), 10_000, 10_000, SEED).unwrap();
        sheet.near(format!("n={n} max dilation"), est.local.sup, SQRT_2, 1e-9);
        sheet.near(format!("n={n} min dilation"), est.local.min(), SQRT_2, 1e-9);
        sheet.at_most(
            format!("n={n} pairwise quotient"),
            est.pairwise,
            SQRT_2 + 1e-9,
        );
    }
}

fn diagonal_degree(sheet: &mut Sheet) {
    let w = degree_winding(&SphereMap::square(Level::Complex), 4096).unwrap();
    sheet.near("n=1 winding number", w as f64, 2.0, 0.0);
    for level in [Level::Quaternion, Level::Octonion] {
        let est = degree_jacobian(&SphereMap::square(level), 1_000_000, SEED).unwrap();
        sheet.near(
            format!("n={} Monte Carlo degree", level.sphere_dim()),
            est.mean,
            2.0,
            3.0 * est.std_err,
        );
    }
}

fn fiber_inequalities(sheet: &mut Sheet) {
    for level in Level::SPHERES {
        let n = level.sphere_dim();
        let stream = 100 + 10 * level.index() as u64;
        let p = sample_sphere_stream(n, 1, SEED, stream).remove(0);
        let fiber = exact_fiber(level, &p, 10_000, stream + 1);
        let mut rng = rng_for(SEED, stream + 2);
        let (mut min, mut closed_dev) = (f64::INFINITY, 0.0_f64);
        for _ in 0..10_000 {
            let q1 = &fiber.points[rng.random_range(0..fiber.len())];
            let q2 = &fiber.points[rng.random_range(0..fiber.len())];
            let r = check_pair_inequalities(q1, q2).unwrap();
            min = min.min(r.min());
            let a = angle(q1.first.coords(), q2.first.coords());
            let closed = 2.0 * (a - PI).powi(2);
            closed_dev = closed_dev
                .max((r.r1 - closed).abs())
                .max((r.r2 - closed).abs());
        }
        sheet.at_least(format!("n={n} min residual"), min, 0.0);
        sheet.at_most(format!("n={n} closed form deviation"), closed_dev, 1e-9);
        let mut anti = 0.0_f64;
        for q in fiber.points.iter().take(1000) {
            let opp = fiber_exact_mult(&p, std::slice::from_ref(&q.first.antipode())).unwrap();
            let r = check_pair_inequalities(q, &opp.points[0]).unwrap();
            anti = anti.max(r.r1.abs()).max(r.r2.abs());
        }
        sheet.at_most(format!("n={n} antipodal residual"), anti, 1e-9);
    }
}

fn fiber_isometry(sheet: &mut Sheet) {
    for level in Level::SPHERES {
        let n = level.sphere_dim();
        let stream = 200 + 10 * level.index() as u64;
        let p = sample_sphere_stream(n, 1, SEED, stream).remove(0);
        let fiber = exact_fiber(level, &p, 1000, stream + 1);
        let fit = fit_isometry(&fiber).unwrap();
        sheet.below(
            format!("n={n} orthogonality defect"),
            fit.matrix.orthogonality_defect(),
            1e-10,
        );
        sheet.below(format!("n={n} fit residual"), fit.residual, 1e-10);

        let mut rng = rng_for(SEED, stream + 2);
        let mut noisy = fiber.clone();
        for q in &mut noisy.points {
            let y: Vec<f64> = q
                .second
                .coords()
                .iter()
                .map(|c| c + 0.1 * rng.random_range(-1.0..1.0))
                .collect();
            q.second = SpherePoint::normalize(y).unwrap();
        }
        let residual = fit_isometry(&noisy)
            .map(|f| f.residual)
            .unwrap_or(f64::INFINITY);
        sheet.above(format!("n={n} noisy fit residual"), residual, 0.01);
    }
}

fn parallel_fibers(sheet: &mut Sheet) {
    for level in Level::SPHERES {
        let n = level.sphere_dim();
        let stream = 300 + 20 * level.index() as u64;
        let ps = sample_sphere_stream(n, 4, SEED, stream);
        let p = &ps[0];
        let fa = exact_fiber(level, p, 50, stream + 1);
        let mut worst = 0.0_f64;
        for (k, q) in ps[1..].iter().chain([&p.antipode()]).enumerate() {
            let fb = exact_fiber(level, q, 1000, stream + 2 + k as u64);
            let par = check_parallel(&fa, &fb, p, q).unwrap();
            worst = worst.max(par.deviation);
        }
        sheet.at_most(format!("n={n} point-to-fiber deviation"), worst, 1e-4);
        let anti = p.antipode();
        let sep = min_pair_distance(
            &exact_fiber(level, p, 300, stream + 10),
            &exact_fiber(level, &anti, 300, stream + 11),
        )
        .unwrap();
        sheet.at_least(
            format!("n={n} antipodal separation"),
            sep,
            PI / SQRT_2 - 1e-6,
        );
    }
}

fn hopf_extension(sheet: &mut Sheet) {
    for level in Level::SPHERES {
        let n = level.sphere_dim();
        let d = level.dim();
        let stream = 400 + 10 * level.index() as u64;
        let split = |v: &[f64]| {
            let s: Vec<f64> = v.iter().map(|c| c * SQRT_2).collect();
            (
                Element::from_slice(level, &s[..d]).unwrap(),
                Element::from_slice(level, &s[d..]).unwrap(),
            )
        };
        let pts = sample_sphere_stream(2 * n + 1, 10_000, SEED, stream);
        let norm_dev = pts
            .iter()
            .map(|z| {
                let (z1, z2) = split(z.coords());
                (linalg::norm(&hopf_raw(&z1, &z2).unwrap()) - 1.0).abs()
            })
            .fold(0.0, f64::max);
        sheet.at_most(format!("n={n} output norm deviation"), norm_dev, 1e-12);

        let xs = sample_sphere_stream(n, 10_000, SEED, stream + 1);
        let ys = sample_sphere_stream(n, 10_000, SEED, stream + 2);
        let mut restrict = 0.0_f64;
        for (x, y) in xs.iter().zip(&ys) {
            let (z1, z2) = (x.to_element().unwrap(), y.to_element().unwrap());
            let raw = hopf_raw(&z1, &z2).unwrap();
            let prod = z1 * z2;
            restrict = raw[..d]
                .iter()
                .zip(prod.coords())
                .map(|(a, b)| (a - b).abs())
                .fold(restrict.max(raw[d].abs()), f64::max);
        }
        sheet.at_most(
            format!("n={n} restriction deviation from (m, 0)"),
            restrict,
            1e-12,
        );

        // stated profile: n+1 singular values equal to 1, n equal to 0
        let (mut ones, mut zeros) = (0.0_f64, 0.0_f64);
        let mut top = 0.0_f64;
        for z in pts.iter().take(200) {
            let (z1, z2) = split(z.coords());
            let s = hopf_singular_values(&z1, &z2).unwrap();
            ones = s[..=n].iter().fold(ones, |acc, v| acc.max((v - 1.0).abs()));
            zeros = s[n + 1..].iter().fold(zeros, |acc, v| acc.max(v.abs()));
            top = top.max(s[0]);
        }
        sheet.at_most(
            format!("n={n} |sv - 1| over the n+1 largest (largest sv {top:.9})"),
            ones,
            1e-5,
        );
        sheet.at_most(format!("n={n} |sv| over the n smallest"), zeros, 1e-5);
    }
}

fn cycle_construction(sheet: &mut Sheet) {
    for level in Level::SPHERES {
        let n = level.sphere_dim();
        let stream = 500 + 20 * level.index() as u64;
        let m = SphereMap::multiplication(level);
        let (mut endpoint, mut pyth, mut excess, mut probe) =
            (0.0_f64, 0.0_f64, f64::NEG_INFINITY, 0.0_f64);
        for k in 0..4 {
            let p = sample_sphere_stream(n, 1, SEED, stream + 3 * k).remove(0);
            let fiber = exact_fiber(level, &p, 2, stream + 3 * k + 1);
            let (a, b) = (&fiber.points[0], &fiber.points[1]);
            let cycle = build_cycle(a, b, 64, 64, SEED + stream + 3 * k + 2).unwrap();
            let bound = cycle.length_bound();
            for c in &cycle.curves {
                endpoint = endpoint
                    .max(product_dist(&c.points[0], a).unwrap())
                    .max(product_dist(c.points.last().unwrap(), b).unwrap());
                pyth = pyth.max((c.gamma_length - c.alpha_length.hypot(c.beta_length)).abs());
                excess = excess.max(c.gamma_length - bound);
            }
            let hit = cycle_intersection_probe(&cycle, &m, &p.antipode()).unwrap();
            probe = probe.max(hit.min_residual);
        }
        sheet.at_most(format!("n={n} endpoint deviation"), endpoint, 1e-10);
        sheet.at_most(format!("n={n} Pythagorean length deviation"), pyth, 1e-6);
        sheet.at_most(format!("n={n} length bound excess"), excess, 1e-6);
        sheet.below(
            format!("n={n} probe min residual over -p (rad, worst of 4)"),
            probe,
            0.15,
        );
    }
}

fn torus_counterexample(sheet: &mut Sheet) {
    sheet.at_most(
        "gradient norm deviation on 200x200",
        gradient_norm_deviation(200),
        1e-10,
    );
    let closure = (0..8)
        .map(|k| {
            gamma_integrate(k as f64 / 8.0, 1e-3)
                .unwrap()
                .closure_defect
        })
        .fold(0.0, f64::max);
    sheet.below("level curve closure defect at step 1e-3", closure, 1e-8);
    let fy = grid(32)
        .iter()
        .map(|p| (f_partials_fd(p, 1e-5)[1] - 1.0).abs())
        .fold(0.0, f64::max);
    sheet.at_most("|df/dy (finite difference) - 1|", fy, 1e-6);
    let (sup, attained) = projection_dilation_sup(800, 1e-12);
    sheet.near("projection dilation sup", sup, 1.0, 1e-12);
    let on_branch = |x: f64| wrap_dist(x, 0.0) <= 1e-12 || wrap_dist(x, 0.5) <= 1e-12;
    sheet.holds(
        "sup attained exactly at x = 0 and x = 1/2",
        attained.len() == 2 && attained.iter().all(|&x| on_branch(x)),
    );

    let fig = build_figure(&FigureSpec::new(8, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("figure.csv");
    let svg_path = dir.path().join("figure.svg");
    std::fs::write(&csv_path, fig.render(FigureFormat::Csv)).unwrap();
    std::fs::write(&svg_path, fig.render(FigureFormat::Svg)).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    sheet.holds(
        "CSV emitted with samples for 16 curves",
        csv.starts_with("curve_id,style,t,x,y")
            && csv.lines().skip(1).all(|l| l.split(',').count() == 5)
            && csv.lines().count() > 16,
    );
    sheet.holds(
        "SVG emitted",
        svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"),
    );
    sheet.near(
        "SVG curve groups",
        svg.matches("<g ").count() as f64,
        16.0,
        0.0,
    );
    let crossings = fig.crossings();
    sheet.at_least("crossings", crossings.len() as f64, 64.0);
    let cos = crossings.iter().map(|c| c.cosine.abs()).fold(0.0, f64::max);
    sheet.at_most("max |cos| at crossings", cos, 1e-4);
}

/// Hamilton product on quaternions `[1, i, j, k]`, written out by hand.
fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn qconj(a: [f64; 4]) -> [f64; 4] {
    [a[0], -a[1], -a[2], -a[3]]
}

/// Octonions as quaternion pairs: `(a,b)(c,d) = (ac − d̄b, da + bc̄)`.
fn octonion_oracle(x: &[f64], y: &[f64]) -> [f64; 8] {
    let q = |s: &[f64]| [s[0], s[1], s[2], s[3]];
    let (a, b, c, d) = (q(&x[..4]), q(&x[4..]), q(&y[..4]), q(&y[4..]));
    let l = hamilton(a, c);
    let l2 = hamilton(qconj(d), b);
    let r = hamilton(d, a);
    let r2 = hamilton(b, qconj(c));
    let mut out = [0.0; 8];
    for i in 0..4 {
        out[i] = l[i] - l2[i];
        out[4 + i] = r[i] + r2[i];
    }
    out
}

/// Signs of `e_i e_j = ±e_(i xor j)`, frozen from the oracle.
const OCTONION_SIGNS: [[i8; 8]; 8] = [
    [1, 1, 1, 1, 1, 1, 1, 1],
    [1, -1, 1, -1, 1, -1, -1, 1],
    [1, -1, -1, 1, 1, 1, -1, -1],
    [1, 1, -1, -1, 1, -1, 1, -1],
    [1, -1, -1, -1, -1, 1, 1, 1],
    [1, 1, -1, 1, -1, -1, -1, 1],
    [1, 1, 1, -1, -1, 1, -1, -1],
    [1, -1, 1, 1, -1, -1, 1, -1],
];

fn algebra_foundation(sheet: &mut Sheet) {
    use rand_distr::{Distribution, StandardNormal};
    for level in Level::SPHERES {
        let mut rng = rng_for(SEED, 900 + level.index() as u64);
        let mut gauss = || {
            let v: Vec<f64> = (0..level.dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            Element::from_slice(level, &v).unwrap()
        };
        let mut worst = 0.0_f64;
        for _ in 0..10_000 {
            let (a, b) = (gauss(), gauss());
            let scale = a.norm() * b.norm();
            worst = worst.max(((a * b).norm() - scale).abs() / scale);
        }
        sheet.below(
            format!("dim {} norm multiplicativity relative error", level.dim()),
            worst,
            1e-12,
        );
    }

    let (mut oracle_mismatch, mut table_mismatch) = (0, 0);
    for i in 0..8 {
        for j in 0..8 {
            let mut ei = [0.0; 8];
            let mut ej = [0.0; 8];
            ei[i] = 1.0;
            ej[j] = 1.0;
            let expected = octonion_oracle(&ei, &ej);
            let got = Element::basis(Level::Octonion, i) * Element::basis(Level::Octonion, j);
            if got.coords() != expected.as_slice() {
                oracle_mismatch += 1;
            }
            let mut frozen = [0.0; 8];
            frozen[i ^ j] = OCTONION_SIGNS[i][j] as f64;
            if frozen != expected {
                table_mismatch += 1;
            }
        }
    }
    sheet.near(
        "octonion basis products differing from the oracle",
        oracle_mismatch as f64,
        0.0,
        0.0,
    );
    sheet.near(
        "oracle entries differing from the frozen sign table",
        table_mismatch as f64,
        0.0,
        0.0,
    );
}
