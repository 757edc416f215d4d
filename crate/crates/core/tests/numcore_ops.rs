use proptest::prelude::*;
use softcorr::numcore::{grad_check, NumError, Tape, Tensor, Var};

const TOL: f64 = 1e-5;
const STEP: f64 = 1e-6;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

/// Reduces any op output to a scalar through a fixed, non-symmetric weighting
/// so that every output coordinate influences the checked value differently.
fn weighted_sum(t: &mut Tape, v: Var) -> Result<Var, NumError> {
    let n = t.value(v).len();
    let w: Vec<f64> = (0..n).map(|k| 0.3 + ((k * 7919) % 13) as f64 / 7.0).collect();
    let shape = t.shape(v).to_vec();
    let wv = t.constant(&Tensor::new(shape, w)?);
    let p = t.mul(v, wv)?;
    t.sum(p)
}

fn check(f: impl Fn(&mut Tape, Var) -> Result<Var, NumError>, x: &Tensor) -> f64 {
    grad_check(|t, v| { let o = f(t, v)?; weighted_sum(t, o) }, x, STEP).unwrap()
}

#[test]
fn op_examples() {
    let mut t = Tape::new();
    let a = t.constant(&Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let i = t.constant(&Tensor::identity(2));
    let p = t.matmul(a, i).unwrap();
    assert_eq!(t.value(p), &[1.0, 2.0, 3.0, 4.0]);

    let z = t.constant(&Tensor::vector(vec![0.0; 4]).unwrap());
    let l = t.logsumexp(z).unwrap();
    assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-15);

    let mut t = Tape::new();
    let x = t.variable(&Tensor::vector(vec![3.0]).unwrap());
    let xx = t.mul(x, x).unwrap();
    let s = t.sum(xx).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[6.0]);
}

#[test]
fn shape_and_index_errors() {
    let mut t = Tape::new();
    let a = t.constant(&Tensor::zeros(&[2, 3]));
    let b = t.constant(&Tensor::zeros(&[2, 3]));
    assert!(matches!(t.matmul(a, b), Err(NumError::Dimension(_))));
    let c = t.constant(&Tensor::zeros(&[3, 2]));
    assert!(matches!(t.add(a, c), Err(NumError::Dimension(_))));
    assert!(matches!(t.gather_rows(a, &[0, 2]), Err(NumError::Index(_))));
}

#[test]
fn diamond_graph_accumulates_both_paths() {
    // y = x*x + 3x reuses x along two branches; each node is visited once.
    let mut t = Tape::new();
    let x = t.variable(&Tensor::vector(vec![2.0, -1.0]).unwrap());
    let sq = t.mul(x, x).unwrap();
    let lin = t.scale(x, 3.0).unwrap();
    let y = t.add(sq, lin).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[7.0, 1.0]);
}

#[test]
fn accumulation_order_independent() {
    // The same sum of branches built in two different orders gives the same gradient.
    let x0 = Tensor::vector(vec![0.3, -1.7, 2.2]).unwrap();
    let grad = |order: &[usize]| {
        let mut t = Tape::new();
        let x = t.variable(&x0);
        let branches = [
            |t: &mut Tape, x: Var| t.scale(x, 1.3),
            |t: &mut Tape, x: Var| t.mul(x, x),
            |t: &mut Tape, x: Var| t.relu(x),
        ];
        let mut acc: Option<Var> = None;
        for &o in order {
            let b = branches[o](&mut t, x).unwrap();
            acc = Some(match acc {
                None => b,
                Some(a) => t.add(a, b).unwrap(),
            });
        }
        let s = t.sum(acc.unwrap()).unwrap();
        t.backward(s).unwrap();
        t.grad(x).unwrap().to_vec()
    };
    let g1 = grad(&[0, 1, 2]);
    let g2 = grad(&[2, 0, 1]);
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let c = t.constant(&Tensor::vector(vec![1.0, 2.0]).unwrap());
    let x = t.variable(&Tensor::vector(vec![1.0, 1.0]).unwrap());
    let y = t.mul(c, x).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert!(t.grad(c).is_none());
    assert_eq!(t.grad(x).unwrap(), &[1.0, 2.0]);
}

#[test]
fn segment_max_routes_to_winner() {
    let mut t = Tape::new();
    let x = t.variable(&Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0], vec![0.0, 0.0]]).unwrap());
    let m = t.segment_max(x, &[0, 2, 3]).unwrap();
    assert_eq!(t.value(m), &[3.0, 5.0, 0.0, 0.0]);
    let s = t.sum(m).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
}

macro_rules! within {
    ($e:expr) => {{
        let err = $e;
        prop_assert!(err <= TOL, "relative error {}", err);
    }};
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grad_matmul(a in mat(3, 4), b in mat(4, 2)) {
        let bb = b.clone();
        within!(check(move |t, v| { let c = t.constant(&bb); t.matmul(v, c) }, &a));
        within!(check(move |t, v| { let c = t.constant(&a); t.matmul(c, v) }, &b));
    }

    #[test]
    fn grad_elementwise(a in mat(3, 3), b in mat(3, 3)) {
        let b1 = b.clone();
        within!(check(move |t, v| { let c = t.constant(&b1); t.add(v, c) }, &a));
        let b2 = b.clone();
        within!(check(move |t, v| { let c = t.constant(&b2); t.sub(c, v) }, &a));
        let b3 = b.clone();
        within!(check(move |t, v| { let c = t.constant(&b3); t.mul(v, c) }, &a));
        within!(check(|t, v| t.mul(v, v), &a));
        within!(check(move |t, v| { let c = t.constant(&b); t.maximum(v, c) }, &a));
        within!(check(|t, v| t.scale(v, -1.7), &a));
    }

    #[test]
    fn grad_structural(a in mat(4, 3), r in mat(1, 3), other in mat(4, 2)) {
        let row = Tensor::vector(r.data().to_vec()).unwrap();
        let rr = row.clone();
        within!(check(move |t, v| { let c = t.constant(&rr); t.add_row(v, c) }, &a));
        let aa = a.clone();
        within!(check(move |t, v| { let c = t.constant(&aa); t.add_row(c, v) }, &row));
        let o = other.clone();
        within!(check(move |t, v| { let c = t.constant(&o); t.concat(&[c, v, c]) }, &a));
        within!(check(|t, v| t.gather_rows(v, &[3, 0, 3, 1]), &a));
        within!(check(|t, v| { let s = t.scale(v, 2.0)?; t.stack(&[v, s]) }, &a));
        within!(check(|t, v| t.transpose(v), &a));
        within!(check(|t, v| t.reshape(v, &[2, 6]), &a));
    }

    #[test]
    fn grad_nonlinear(a in mat(4, 5)) {
        within!(check(|t, v| t.relu(v), &a));
        within!(check(|t, v| t.logsumexp(v), &a));
        within!(check(|t, v| t.segment_max(v, &[0, 1, 4]), &a));
        within!(check(|t, v| t.normalize_rows(v), &a));
        within!(check(|t, v| t.layer_norm(v), &a));
    }

    #[test]
    fn grad_reductions(a in mat(3, 4)) {
        within!(check(|t, v| t.sum(v), &a));
        within!(check(|t, v| t.mean(v), &a));
        within!(check(|t, v| t.sum_last(v), &a));
        within!(check(|t, v| t.squared_l2(v), &a));
        within!(check(|t, v| t.l1(v), &a));
    }

    #[test]
    fn forward_and_backward_stay_finite(a in mat(3, 3)) {
        let mut t = Tape::new();
        let x = t.variable(&a);
        let n = t.normalize_rows(x).unwrap();
        let l = t.logsumexp(n).unwrap();
        let s = t.sum(l).unwrap();
        t.backward(s).unwrap();
        prop_assert!(t.grad(x).unwrap().iter().all(|g| g.is_finite()));
    }
}
