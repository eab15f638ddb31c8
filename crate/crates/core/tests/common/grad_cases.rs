//! Differentiable operations paired with random inputs, for finite-difference checks.
//! Shared with the acceptance suite of the `scen` crate.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scen_core::autodiff::{Graph, Var};
use scen_core::model::{self, BoundScen};
use scen_core::nn::{BoundLinear, BoundMlp};
use scen_core::stm::{self, BoundStm, GanMode};
use scen_core::{CompositionLabel, Result, Tensor};

pub type LossFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub f: LossFn,
}

/// Entries uniform in `[-1, 1]`, kept at least `1e-3` away from 0 so that
/// relu kinks never sit within a finite-difference step.
pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v.abs() > 1e-3 {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `dot(y, r)` against a fixed random `r`, so every output coordinate gets
/// a distinct upstream weight.
fn probe(g: &mut Graph, y: Var, r: &Tensor) -> Result<Var> {
    let rv = g.constant(r.clone());
    g.dot(y, rv)
}

fn unary(name: &'static str, rng: &mut ChaCha8Rng, shape: &[usize], op: fn(&mut Graph, Var) -> Var) -> Case {
    let r = rand_tensor(rng, shape);
    Case {
        name,
        inputs: vec![rand_tensor(rng, shape)],
        f: Box::new(move |g, v| {
            let y = op(g, v[0]);
            probe(g, y, &r)
        }),
    }
}

fn mlp_from(vars: &[Var]) -> BoundMlp {
    BoundMlp {
        layers: vars
            .chunks(2)
            .map(|c| BoundLinear { weight: c[0], bias: c[1] })
            .collect(),
    }
}

fn mlp_shapes(dims: &[usize]) -> Vec<Vec<usize>> {
    dims.windows(2).flat_map(|w| [vec![w[0], w[1]], vec![w[1]]]).collect()
}

/// Every checked operation at one random point drawn from `seed`.
pub fn cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut out = Vec::new();

    let r = rand_tensor(rng, &[3, 2]);
    out.push(Case {
        name: "matmul",
        inputs: vec![rand_tensor(rng, &[3, 4]), rand_tensor(rng, &[4, 2])],
        f: Box::new(move |g, v| {
            let y = g.matmul(v[0], v[1])?;
            probe(g, y, &r)
        }),
    });
    for (name, sub) in [("add", false), ("sub", true)] {
        let r = rand_tensor(rng, &[2, 3]);
        out.push(Case {
            name,
            inputs: vec![rand_tensor(rng, &[2, 3]), rand_tensor(rng, &[2, 3])],
            f: Box::new(move |g, v| {
                let y = if sub { g.sub(v[0], v[1])? } else { g.add(v[0], v[1])? };
                probe(g, y, &r)
            }),
        });
    }
    let r = rand_tensor(rng, &[4, 3]);
    out.push(Case {
        name: "add_bias",
        inputs: vec![rand_tensor(rng, &[4, 3]), rand_tensor(rng, &[3])],
        f: Box::new(move |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            probe(g, y, &r)
        }),
    });
    out.push(unary("relu", rng, &[3, 4], |g, x| g.relu(x)));
    out.push(unary("sigmoid", rng, &[3, 4], |g, x| g.sigmoid(x)));
    out.push(unary("tanh", rng, &[3, 4], |g, x| g.tanh(x)));
    out.push(unary("log_sigmoid", rng, &[3, 4], |g, x| g.log_sigmoid(x)));
    out.push(unary("l2_normalize", rng, &[3, 4], |g, x| g.l2_normalize(x)));
    out.push(unary("scale", rng, &[3, 4], |g, x| g.scale(x, -2.5)));
    out.push(unary("log_softmax_rows", rng, &[3, 5], |g, x| g.log_softmax(x, 1).unwrap()));
    out.push(unary("log_softmax_cols", rng, &[3, 5], |g, x| g.log_softmax(x, 0).unwrap()));
    out.push(unary("log_softmax_vector", rng, &[6], |g, x| g.log_softmax(x, 0).unwrap()));
    out.push(Case {
        name: "dot",
        inputs: vec![rand_tensor(rng, &[5]), rand_tensor(rng, &[5])],
        f: Box::new(|g, v| {
            let d = g.dot(v[0], v[1])?;
            Ok(g.tanh(d))
        }),
    });
    let r = rand_tensor(rng, &[3]);
    out.push(Case {
        name: "row_dot",
        inputs: vec![rand_tensor(rng, &[3, 4]), rand_tensor(rng, &[3, 4])],
        f: Box::new(move |g, v| {
            let y = g.row_dot(v[0], v[1])?;
            probe(g, y, &r)
        }),
    });
    let r = rand_tensor(rng, &[2, 5]);
    out.push(Case {
        name: "concat",
        inputs: vec![rand_tensor(rng, &[2, 3]), rand_tensor(rng, &[2, 2])],
        f: Box::new(move |g, v| {
            let y = g.concat(v[0], v[1])?;
            probe(g, y, &r)
        }),
    });
    out.push(Case {
        name: "mean",
        inputs: vec![rand_tensor(rng, &[3, 4])],
        f: Box::new(|g, v| {
            let t = g.tanh(v[0]);
            Ok(g.mean(t))
        }),
    });
    out.push(Case {
        name: "sum",
        inputs: vec![rand_tensor(rng, &[3, 4])],
        f: Box::new(|g, v| {
            let t = g.sigmoid(v[0]);
            Ok(g.sum(t))
        }),
    });
    let r = rand_tensor(rng, &[5, 3]);
    out.push(Case {
        name: "gather_rows",
        inputs: vec![rand_tensor(rng, &[4, 3])],
        f: Box::new(move |g, v| {
            let y = g.gather_rows(v[0], &[2, 0, 2, 3, 2])?;
            probe(g, y, &r)
        }),
    });
    let r = rand_tensor(rng, &[3]);
    out.push(Case {
        name: "pick",
        inputs: vec![rand_tensor(rng, &[3, 4])],
        f: Box::new(move |g, v| {
            let y = g.pick(v[0], &[3, 0, 1])?;
            probe(g, y, &r)
        }),
    });
    let r = rand_tensor(rng, &[4, 3]);
    out.push(Case {
        name: "reshape",
        inputs: vec![rand_tensor(rng, &[2, 6])],
        f: Box::new(move |g, v| {
            let y = g.reshape(v[0], &[4, 3])?;
            probe(g, y, &r)
        }),
    });

    for (name, normalize) in [("info_nce", false), ("info_nce_normalized", true)] {
        let (b, k, d) = (3, 4, 5);
        out.push(Case {
            name,
            inputs: vec![rand_tensor(rng, &[b, d]), rand_tensor(rng, &[b, d]), rand_tensor(rng, &[b * k, d])],
            f: Box::new(move |g, v| model::info_nce(g, v[0], v[1], v[2], k, 0.5, normalize)),
        });
    }

    // classification_loss over linear heads: inputs h_s, h_o, C_a (w, b), C_o (w, b)
    let labels = vec![CompositionLabel::new(0, 1), CompositionLabel::new(2, 3), CompositionLabel::new(1, 0)];
    let (p, na, no) = (4, 3, 4);
    out.push(Case {
        name: "classification_loss",
        inputs: vec![
            rand_tensor(rng, &[3, p]),
            rand_tensor(rng, &[3, p]),
            rand_tensor(rng, &[p, na]),
            rand_tensor(rng, &[na]),
            rand_tensor(rng, &[p, no]),
            rand_tensor(rng, &[no]),
        ],
        f: Box::new(move |g, v| {
            let scen = dummy_scen(g, p, mlp_from(&v[2..4]), mlp_from(&v[4..6]));
            model::classification_loss(g, &scen, v[0], v[1], &labels)
        }),
    });

    // discriminator: real, fake, then D weights
    let (f, h) = (4, 3);
    let d_shapes = mlp_shapes(&[f, h, 1]);
    let mut inputs = vec![rand_tensor(rng, &[3, f]), rand_tensor(rng, &[3, f])];
    inputs.extend(d_shapes.iter().map(|s| rand_tensor(rng, s)));
    out.push(Case {
        name: "discriminator_loss",
        inputs,
        f: Box::new(|g, v| {
            let s = BoundStm { g: mlp_from(&[]), d: mlp_from(&v[2..]) };
            stm::discriminator_loss(g, &s, v[0], v[1])
        }),
    });
    for (name, mode) in [("generator_loss_saturating", GanMode::Saturating), ("generator_loss_non_saturating", GanMode::NonSaturating)] {
        let mut inputs = vec![rand_tensor(rng, &[3, f])];
        inputs.extend(d_shapes.iter().map(|s| rand_tensor(rng, s)));
        out.push(Case {
            name,
            inputs,
            f: Box::new(move |g, v| {
                let s = BoundStm { g: mlp_from(&[]), d: mlp_from(&v[1..]) };
                stm::generator_adversarial_loss(g, &s, v[0], mode)
            }),
        });
    }

    // STM generator output with respect to h~_s, h_o and G
    let (p, f, h) = (3, 4, 5);
    let g_shapes = mlp_shapes(&[2 * p, h, f]);
    let r = rand_tensor(rng, &[2, f]);
    let mut inputs = vec![rand_tensor(rng, &[2, p]), rand_tensor(rng, &[2, p])];
    inputs.extend(g_shapes.iter().map(|s| rand_tensor(rng, s)));
    out.push(Case {
        name: "generate",
        inputs,
        f: Box::new(move |g, v| {
            let s = BoundStm { g: mlp_from(&v[2..]), d: mlp_from(&[]) };
            let x = s.generate(g, v[0], v[1])?;
            probe(g, x, &r)
        }),
    });

    // reclassification through G -> FC -> E_s / E_o -> C_a / C_o
    let (p, f, e, hid, na, no) = (3, 4, 4, 5, 3, 2);
    let mut shapes = vec![vec![2, p], vec![2, p]];
    shapes.extend(mlp_shapes(&[2 * p, hid, f])); // G: 2..6
    shapes.extend(mlp_shapes(&[f, e])); // FC: 6..8
    shapes.extend(mlp_shapes(&[e, hid, p])); // E_s: 8..12
    shapes.extend(mlp_shapes(&[e, hid, p])); // E_o: 12..16
    shapes.extend(mlp_shapes(&[p, na])); // C_a: 16..18
    shapes.extend(mlp_shapes(&[p, no])); // C_o: 18..20
    out.push(Case {
        name: "reclassification",
        inputs: shapes.iter().map(|s| rand_tensor(rng, s)).collect(),
        f: Box::new(|g, v| {
            let s = BoundStm { g: mlp_from(&v[2..6]), d: mlp_from(&[]) };
            let scen = BoundScen {
                fc: BoundLinear { weight: v[6], bias: v[7] },
                e_s: mlp_from(&v[8..12]),
                e_o: mlp_from(&v[12..16]),
                c_a: mlp_from(&v[16..18]),
                c_o: mlp_from(&v[18..20]),
            };
            let fake = s.generate(g, v[0], v[1])?;
            stm::reclassification_loss(g, &scen, fake, &[2, 0], &[1, 1])
        }),
    });

    // prototype coordinates with respect to the projection weights
    let (f, e, hid, p) = (4, 3, 5, 3);
    let mut shapes = vec![vec![2, f]];
    shapes.extend(mlp_shapes(&[f, e]));
    shapes.extend(mlp_shapes(&[e, hid, p]));
    shapes.extend(mlp_shapes(&[e, hid, p]));
    let r1 = rand_tensor(rng, &[2, p]);
    let r2 = rand_tensor(rng, &[2, p]);
    out.push(Case {
        name: "encode",
        inputs: shapes.iter().map(|s| rand_tensor(rng, s)).collect(),
        f: Box::new(move |g, v| {
            let scen = BoundScen {
                fc: BoundLinear { weight: v[1], bias: v[2] },
                e_s: mlp_from(&v[3..7]),
                e_o: mlp_from(&v[7..11]),
                c_a: mlp_from(&[]),
                c_o: mlp_from(&[]),
            };
            let (hs, ho) = scen.encode(g, v[0])?;
            let a = probe(g, hs, &r1)?;
            let b = probe(g, ho, &r2)?;
            g.add(a, b)
        }),
    });
    out
}

fn dummy_scen(g: &mut Graph, p: usize, c_a: BoundMlp, c_o: BoundMlp) -> BoundScen {
    let w = g.constant(Tensor::zeros(&[p, p]));
    let b = g.constant(Tensor::zeros(&[p]));
    BoundScen {
        fc: BoundLinear { weight: w, bias: b },
        e_s: mlp_from(&[]),
        e_o: mlp_from(&[]),
        c_a,
        c_o,
    }
}
