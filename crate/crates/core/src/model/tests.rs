use super::*;
use crate::data::{encode_pair_input, encode_source, EncUtt, SourceInput, Speaker, EOS};
use crate::params::Bound;
use crate::rng::stream;
use crate::tensor::{Graph, Var};

fn tiny(seed: u64) -> FlatNct {
    let cfg = ModelConfig {
        layers: 2,
        hidden: 8,
        ff: 16,
        heads: 2,
        dropout: 0.0,
        max_len: 32,
        max_turns: 8,
    };
    let mut rng = stream(seed, &[0]);
    let mut m = FlatNct::new(cfg, 12, &mut rng).unwrap();
    // Move gains and biases off their initial values.
    m.perturb(&mut rng, 0.05);
    m
}

fn utt(turn: usize, ids: &[u32]) -> EncUtt {
    EncUtt {
        ids: ids.to_vec(),
        speaker: Speaker::for_turn(turn),
        turn,
    }
}

fn source(context: &[&[u32]], current: &[u32]) -> SourceInput {
    let ctx: Vec<EncUtt> = context.iter().enumerate().map(|(i, c)| utt(i + 1, c)).collect();
    let refs: Vec<&EncUtt> = ctx.iter().collect();
    encode_source(&refs, &utt(ctx.len() + 1, current), 32, 8).unwrap()
}

fn random_source(seed: u64) -> SourceInput {
    use rand::Rng;
    let mut rng = stream(seed, &[1]);
    let mut draw = |n: usize| -> Vec<u32> { (0..n).map(|_| rng.gen_range(5..12)).collect() };
    let ctx: Vec<Vec<u32>> = (0..3).map(|i| draw(2 + i)).collect();
    let cur = draw(4);
    let refs: Vec<&[u32]> = ctx.iter().map(Vec::as_slice).collect();
    source(&refs, &cur)
}

fn flat_states(m: &FlatNct, inputs: &[SourceInput], pass: &mut Pass) -> Tensor {
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let (h, _) = m.encode_flat(&mut g, &b, inputs, pass).unwrap();
    g.value(h).clone()
}

#[test]
fn zeroed_tables_leave_the_position_encoding() {
    let mut m = tiny(1);
    let l = m.layout().clone();
    for idx in [l.word, l.speaker, l.turn] {
        m.params_mut().get_mut(idx).data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let x = m.embed(&mut g, &b, &[5, 6], &[0, 1], &[0, 1], &[0, 3]).unwrap();
    let d = m.config().hidden;
    assert_eq!(g.value(x).data(), &m.position_table().data()[..2 * d]);
}

#[test]
fn sinusoid_rows_match_closed_form() {
    let t = sinusoid_table(5, 4);
    assert_eq!(t.shape(), &[5, 4]);
    let c = 0.5f64.sqrt();
    assert_eq!(t.row_slice(0), &[0.0, c, 0.0, c]);
    let expect = [3f64.sin(), 3f64.cos(), (3.0 / 100.0f64).sin(), (3.0 / 100.0f64).cos()];
    for (a, b) in t.row_slice(3).iter().zip(expect) {
        assert!((a - c * b).abs() < 1e-15);
    }
}

#[test]
fn embedding_is_a_sum_of_four_rows() {
    let mut m = tiny(2);
    let l = m.layout().clone();
    let d = m.config().hidden;
    let mut set_row = |idx: usize, row: usize, vals: [f64; 2]| {
        let t = m.params_mut().get_mut(idx);
        t.data_mut()[row * d..row * d + 2].copy_from_slice(&vals);
    };
    set_row(l.word, 7, [1.0, 0.0]);
    set_row(l.speaker, 1, [1.0, 1.0]);
    set_row(l.turn, 4, [2.0, 0.0]);
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let x = m.embed(&mut g, &b, &[7], &[2], &[1], &[4]).unwrap();
    let pe = m.position_table().row_slice(2);
    assert_eq!(&g.value(x).data()[..2], &[4.0 + pe[0], 1.0 + pe[1]]);
}

#[test]
fn speaker_and_turn_rows_are_the_residual_of_word_and_position() {
    let m = tiny(3);
    let s = random_source(3);
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let x = m.embed(&mut g, &b, &s.ids, &s.positions, &s.speakers, &s.turns).unwrap();
    let p = m.params();
    let l = m.layout();
    let d = m.config().hidden;
    for i in 0..s.len() {
        let row = g.value(x).row_slice(i);
        for k in 0..d {
            let lhs = row[k]
                - p.get(l.word).at(s.ids[i] as usize, k)
                - m.position_table().at(s.positions[i], k);
            let rhs = p.get(l.speaker).at(s.speakers[i], k) + p.get(l.turn).at(s.turns[i], k);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

#[test]
fn swapping_tokens_only_moves_position_rows() {
    let m = tiny(4);
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let a = m.embed(&mut g, &b, &[5, 9], &[0, 1], &[0, 0], &[2, 2]).unwrap();
    let c = m.embed(&mut g, &b, &[9, 5], &[0, 1], &[0, 0], &[2, 2]).unwrap();
    let pe = m.position_table();
    for k in 0..m.config().hidden {
        // Token 5 moved from position 0 to 1.
        let diff = g.value(c).at(1, k) - g.value(a).at(0, k);
        assert!((diff - (pe.at(1, k) - pe.at(0, k))).abs() < 1e-12);
    }
}

#[test]
fn out_of_range_id_names_the_table() {
    let m = tiny(5);
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let err = m.embed(&mut g, &b, &[5], &[0], &[2], &[0]).unwrap_err();
    assert!(err.to_string().contains("speaker"));
    let err = m.embed(&mut g, &b, &[5], &[0], &[0], &[8]).unwrap_err();
    assert!(err.to_string().contains("turn"));
}

#[test]
fn upper_layers_put_no_mass_on_context() {
    for seed in 0..20 {
        let m = tiny(seed);
        let inputs = vec![random_source(seed), random_source(seed + 100)];
        let mut trace = ForwardTrace::default();
        flat_states(&m, &inputs, &mut Pass::traced(&mut trace));
        assert_eq!(trace.encoder_attention.len(), 2);
        let mut first_layer_mass = 0.0;
        for (l, layer) in trace.encoder_attention.iter().enumerate() {
            for (e, heads) in layer.iter().enumerate() {
                let bd = inputs[e].boundary;
                for map in heads {
                    for r in bd..inputs[e].len() {
                        let ctx: f64 = map.row_slice(r)[..bd].iter().sum();
                        if l == 0 {
                            first_layer_mass += ctx;
                        } else {
                            assert!(map.row_slice(r)[..bd].iter().all(|&p| p == 0.0));
                        }
                    }
                }
            }
        }
        assert!(first_layer_mass > 0.0);
    }
}

#[test]
fn empty_context_matches_plain_encoder_exactly() {
    let m = tiny(6);
    let s = source(&[], &[5, 6, 7]);
    let flat = flat_states(&m, std::slice::from_ref(&s), &mut Pass::eval());
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let (h, _) = m.encode_plain(&mut g, &b, &[s], &mut Pass::eval()).unwrap();
    assert_eq!(&flat, g.value(h));
}

#[test]
fn context_reaches_output_only_through_first_layer() {
    let m = tiny(7);
    let a = source(&[&[5, 6], &[7]], &[8, 9]);
    let mut b_in = a.clone();
    b_in.ids[0] = 10;
    let ha = flat_states(&m, std::slice::from_ref(&a), &mut Pass::eval());
    let hb = flat_states(&m, std::slice::from_ref(&b_in), &mut Pass::eval());
    assert_ne!(ha, hb);
    let ha = flat_states(&m, std::slice::from_ref(&a), &mut Pass::eval().without_context_attention());
    let hb = flat_states(&m, &[b_in], &mut Pass::eval().without_context_attention());
    assert_eq!(ha, hb);
}

#[test]
fn packing_examples_does_not_change_results() {
    let m = tiny(8);
    let a = random_source(1);
    let c = random_source(2);
    let both = flat_states(&m, &[a.clone(), c.clone()], &mut Pass::eval());
    let ha = flat_states(&m, &[a], &mut Pass::eval());
    let hc = flat_states(&m, &[c], &mut Pass::eval());
    let mut joined = ha.data().to_vec();
    joined.extend_from_slice(hc.data());
    for (x, y) in both.data().iter().zip(&joined) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn plain_encoder_single_token_and_order_sensitivity() {
    let m = tiny(9);
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let one = encode_pair_input(&[], &[], 8);
    let (h, _) = m.encode_pairs(&mut g, &b, &[one], &mut Pass::eval()).unwrap();
    assert!(g.value(h).all_finite());

    let p = encode_pair_input(&[vec![5, 6, 7]], &[8, 9], 16);
    let q = encode_pair_input(&[vec![7, 5, 6]], &[9, 8], 16);
    let (hp, _) = m.encode_pairs(&mut g, &b, &[p], &mut Pass::eval()).unwrap();
    let (hq, _) = m.encode_pairs(&mut g, &b, &[q], &mut Pass::eval()).unwrap();
    assert_ne!(g.value(hp).row_slice(0), g.value(hq).row_slice(0));
}

#[test]
fn pooling() {
    let mut g = Graph::new();
    let s = g.constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 5.0, -1.0, 0.5]));
    let one = FlatNct::pool_utterance(&mut g, s, 1, 1).unwrap();
    assert_eq!(g.value(one).data(), &[3.0, 5.0]);
    let all = FlatNct::pool_utterance(&mut g, s, 0, 3).unwrap();
    let want = [(1.0 + 3.0 - 1.0) / 3.0, (2.0 + 5.0 + 0.5) / 3.0];
    for (a, b) in g.value(all).data().iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    let ctx = FlatNct::pool_context(&mut g, s, 0);
    assert_eq!(g.value(ctx).data(), &[1.0, 2.0]);
    assert!(FlatNct::pool_utterance(&mut g, s, 0, 0).is_err());
}

fn score_with(m: &FlatNct, head: Head, cand: &[f64], ctx: &[f64]) -> f64 {
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let c = g.constant(Tensor::row(cand.to_vec()));
    let x = g.constant(Tensor::row(ctx.to_vec()));
    let p = m.score(&mut g, &b, head, c, x);
    g.scalar(p)
}

#[test]
fn classifier_heads() {
    let mut m = tiny(10);
    let d = m.config().hidden;
    let cand: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
    let ctx: Vec<f64> = (0..d).map(|i| (i as f64 * 0.11).cos()).collect();
    for head in [Head::Utterance, Head::Speaker] {
        let idx = m.head_index(head);
        let w = m.params().get(idx).data().to_vec();
        let z: f64 = w[..d].iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>()
            + w[d..].iter().zip(&ctx).map(|(a, b)| a * b).sum::<f64>();
        let p = score_with(&m, head, &cand, &ctx);
        assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);

        for v in m.params_mut().get_mut(idx).data_mut() {
            *v = -*v;
        }
        let q = score_with(&m, head, &cand, &ctx);
        assert!((p + q - 1.0).abs() < 1e-12);

        m.params_mut().get_mut(idx).data_mut().fill(0.0);
        assert_eq!(score_with(&m, head, &cand, &ctx), 0.5);
    }
}

fn decode_rows(m: &FlatNct, src: &SourceInput, prefix: &[u32]) -> Tensor {
    let mut g = Graph::new();
    let b = Bound::frozen(&mut g, m.params());
    let (h, segs) = m.encode_flat(&mut g, &b, std::slice::from_ref(src), &mut Pass::eval()).unwrap();
    let p = m.decode(&mut g, &b, &[prefix], h, &segs, &mut Pass::eval()).unwrap();
    g.value(p).clone()
}

#[test]
fn decoder_distributions_and_causality() {
    let m = tiny(11);
    let src = random_source(11);
    let a = decode_rows(&m, &src, &[EOS, 5, 6, 7]);
    for r in 0..a.rows() {
        assert!((a.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let b = decode_rows(&m, &src, &[EOS, 5, 9, 10]);
    assert_eq!(a.row_slice(0), b.row_slice(0));
    assert_eq!(a.row_slice(1), b.row_slice(1));
    assert_ne!(a.row_slice(2), b.row_slice(2));
}

#[test]
fn zero_output_layer_is_uniform() {
    let mut m = tiny(12);
    let (w, bias) = (m.layout().out_weight, m.layout().out_bias);
    m.params_mut().get_mut(w).data_mut().fill(0.0);
    m.params_mut().get_mut(bias).data_mut().fill(0.0);
    let p = decode_rows(&m, &random_source(0), &[EOS, 6]);
    assert!(p.data().iter().all(|&x| (x - 1.0 / 12.0).abs() < 1e-15));
}

#[test]
fn discrimination_loss_reaches_the_encoder() {
    let m = tiny(13);
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, m.params());
    let pair = encode_pair_input(&[vec![5, 6]], &[7, 8], 16);
    let p = m
        .pair_probabilities(&mut g, &b, Head::Utterance, &[pair], &mut Pass::eval())
        .unwrap();
    let loss = g.binary_nll(p, true);
    g.backward(loss).unwrap();
    let grads = b.grads(&g, m.params());
    let enc_norm: f64 = m
        .encoder_param_indices()
        .iter()
        .flat_map(|&i| grads[i].iter())
        .map(|v| v * v)
        .sum();
    assert!(enc_norm > 0.0);
    let sd = m.head_index(Head::Speaker);
    assert!(grads[sd].iter().all(|&v| v == 0.0));
}

/// Spot-checks whole-model gradients against central differences on a
/// handful of entries from every parameter tensor.
#[test]
fn model_gradients_match_finite_differences() {
    let m = tiny(14);
    let src = random_source(14);
    let gold = [6usize, 7, EOS as usize];
    let prefix = [EOS, 6, 7];
    let pair = encode_pair_input(&[vec![5, 6]], &[7, 8], 16);
    let loss = |g: &mut Graph, b: &Bound| -> Var {
        let (h, segs) = m.encode_flat(g, b, std::slice::from_ref(&src), &mut Pass::eval()).unwrap();
        let p = m.decode(g, b, &[&prefix], h, &segs, &mut Pass::eval()).unwrap();
        let ce = g.smoothed_cross_entropy(p, &gold, 0.1);
        let q = m
            .pair_probabilities(g, b, Head::Speaker, std::slice::from_ref(&pair), &mut Pass::eval())
            .unwrap();
        let bce = g.binary_nll(q, false);
        g.add(ce, bce)
    };
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, m.params());
    let root = loss(&mut g, &b);
    g.backward(root).unwrap();
    let grads = b.grads(&g, m.params());
    let eval = |params: &ParamSet| -> f64 {
        let mut g = Graph::new();
        let b = Bound::frozen(&mut g, params);
        let r = loss(&mut g, &b);
        g.scalar(r)
    };
    let h = 1e-5;
    let mut work = m.params().clone();
    for i in 0..work.len() {
        let n = work.get(i).len();
        for j in [0, n / 2, n - 1] {
            let orig = work.get(i).data()[j];
            work.get_mut(i).data_mut()[j] = orig + h;
            let up = eval(&work);
            work.get_mut(i).data_mut()[j] = orig - h;
            let down = eval(&work);
            work.get_mut(i).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = crate::tensor::check::rel_error(grads[i][j], numeric);
            assert!(err < 1e-4, "{}[{j}]: {} vs {numeric}", work.names()[i], grads[i][j]);
        }
    }
}
