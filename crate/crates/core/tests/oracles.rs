mod common;

use common::*;
use rand::Rng;
use wordspot_core::dtp::{dtp_proposals, DtpConfig};
use wordspot_core::eval::{average_precision, proposal_recall, GroundTruth};
use wordspot_core::geometry::{decode_box, encode_box, label_proposals, match_and_sample, nms, MatchConfig, MatchLabel};
use wordspot_core::image::{binary_close, connected_components, gray_dilate, gray_erode, GrayImage, StructuringElement};
use wordspot_core::index::{rank_by_vector, Hit, PageIndex, Proposal};
use wordspot_core::text::{dctow, phoc, DctowConfig, PhocConfig};
use wordspot_core::BBox;

#[test]
fn phoc_and_dctow_match_oracles() {
    let pc = PhocConfig::default();
    let dc = DctowConfig::default();
    let mut rng = rng(1);
    for _ in 0..1000 {
        let w = random_word(&mut rng, 30);
        let p = phoc(&w, &pc).unwrap();
        assert_eq!(p.values, phoc_oracle(&w, &pc.levels), "{w}");
        let d = dctow(&w, &dc).unwrap();
        let o = dctow_oracle(&w, dc.r);
        let diff = d.values.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{w}: {diff}");
    }
}

#[test]
fn nms_matches_oracle() {
    let mut rng = rng(2);
    for trial in 0..500 {
        let n = rng.random_range(0..50);
        let boxes: Vec<BBox> = (0..n).map(|_| random_grid_box(&mut rng, 60)).collect();
        // coarse scores so ties happen
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
        let t = [0.0, 0.1, 0.3, 0.5, 0.7, 1.0][trial % 6];
        assert_eq!(nms(&boxes, &scores, t), nms_oracle(&boxes, &scores, t));
    }
}

#[test]
fn matching_matches_oracle() {
    let cfg = MatchConfig::default();
    let mut rng = rng(3);
    for trial in 0..500 {
        let gts: Vec<BBox> = (0..3).map(|_| random_grid_box(&mut rng, 120)).collect();
        let mut proposals: Vec<BBox> = (0..200).map(|_| random_grid_box(&mut rng, 120)).collect();
        // jittered copies of the ground truth so positives exist
        for g in &gts {
            for _ in 0..5 {
                let j = |r: &mut rand_chacha::ChaCha8Rng| r.random_range(-1.0..1.0);
                proposals.push(BBox::new(g.xc + j(&mut rng), g.yc + j(&mut rng), g.w + j(&mut rng).abs(), g.h));
            }
        }
        let (pos, neg) = match_oracle(&proposals, &gts, &cfg);
        let labels = label_proposals(&proposals, &gts, &cfg);
        let lp: Vec<(usize, usize)> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                MatchLabel::Positive { gt, .. } => Some((i, *gt)),
                _ => None,
            })
            .collect();
        let ln: Vec<usize> = labels.iter().enumerate().filter(|(_, l)| **l == MatchLabel::Negative).map(|(i, _)| i).collect();
        assert_eq!(lp, pos);
        assert_eq!(ln, neg);

        let s = match_and_sample(&proposals, &gts, &cfg, trial as u64).unwrap();
        assert_eq!(s.positives.len(), pos.len().min(cfg.pos_per_batch));
        assert_eq!(s.negatives.len(), neg.len().min(cfg.batch - s.positives.len()));
        let mut seen = std::collections::BTreeSet::new();
        for p in &s.positives {
            assert!(pos.contains(&(p.proposal, p.gt)));
            assert!(seen.insert(p.proposal));
            assert_eq!(p.target, encode_box(&proposals[p.proposal], &gts[p.gt]));
        }
        for n in &s.negatives {
            assert!(neg.contains(n));
            assert!(seen.insert(*n));
        }
        assert_eq!(s, match_and_sample(&proposals, &gts, &cfg, trial as u64).unwrap());
    }
}

#[test]
fn box_round_trip() {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_box(&mut rng, 2000.0);
        let g = random_box(&mut rng, 2000.0);
        let d = decode_box(&a, &encode_box(&a, &g));
        for (x, y) in d.xywh().iter().zip(g.xywh()) {
            worst = worst.max((x - y).abs() / y.abs().max(1.0));
        }
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn components_match_flood_fill() {
    let mut rng = rng(5);
    for _ in 0..50 {
        let density = rng.random_range(0.1..0.6);
        let img = random_bitmap(&mut rng, 32, 32, density);
        let got: Vec<_> = connected_components(&img).into_iter().map(|c| (c.rect, c.area)).collect();
        assert_eq!(got, components_oracle(&img));
    }
}

#[test]
fn closing_matches_definition() {
    let mut rng = rng(6);
    for _ in 0..40 {
        let img = random_bitmap(&mut rng, 24, 17, 0.15);
        let (w, h) = ([1, 3, 5, 9][rng.random_range(0..4)], [1, 3, 5][rng.random_range(0..3)]);
        let se = StructuringElement::new(w, h).unwrap();
        assert_eq!(binary_close(&img, se), closing_oracle(&img, w, h));
    }
}

#[test]
fn gray_morphology_matches_windows() {
    let mut rng = rng(7);
    for _ in 0..20 {
        let img = GrayImage::from_pixels(19, 13, (0..19 * 13).map(|_| rng.random::<u8>()).collect()).unwrap();
        for s in [1, 3, 5] {
            let se = StructuringElement::new(s, s).unwrap();
            assert_eq!(gray_dilate(&img, se), rank_oracle(&img, s, s, true));
            assert_eq!(gray_erode(&img, se), rank_oracle(&img, s, s, false));
        }
    }
}

#[test]
fn recall_matches_double_loop() {
    let mut rng = rng(8);
    for _ in 0..100 {
        let pages = rng.random_range(1..5);
        let props: Vec<Vec<BBox>> = (0..pages).map(|_| (0..rng.random_range(0..30)).map(|_| random_grid_box(&mut rng, 50)).collect()).collect();
        let gts: Vec<Vec<BBox>> = (0..pages).map(|_| (0..rng.random_range(0..6)).map(|_| random_grid_box(&mut rng, 50)).collect()).collect();
        for t in [0.25, 0.5] {
            let mut sum = 0.0;
            let mut counted = 0;
            for p in 0..pages {
                if gts[p].is_empty() {
                    continue;
                }
                let mut found = 0;
                for g in &gts[p] {
                    let mut hit = false;
                    for b in &props[p] {
                        if wordspot_core::geometry::iou(b, g) > t {
                            hit = true;
                        }
                    }
                    found += hit as usize;
                }
                sum += found as f64 / gts[p].len() as f64;
                counted += 1;
            }
            let expect = if counted == 0 { 0.0 } else { sum / counted as f64 };
            assert!((proposal_recall(&props, &gts, t) - expect).abs() < 1e-15);
        }
        assert!(proposal_recall(&props, &gts, 0.25) >= proposal_recall(&props, &gts, 0.5));
    }
}

#[test]
fn ranking_matches_brute_force_sort() {
    let mut rng = rng(9);
    let dim = 8;
    // well separated boxes so the zero-overlap NMS removes nothing
    let proposals: Vec<Proposal> = (0..100)
        .map(|i| Proposal {
            bbox: BBox::from_xywh((i % 10) as f64 * 20.0, (i / 10) as f64 * 20.0, 10.0, 10.0),
            wordness: 1.0,
            descriptor: (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        })
        .collect();
    let page = PageIndex {
        page_id: "p".into(),
        image_path: String::new(),
        width: 200,
        height: 200,
        scale: 1.0,
        n_dtp: 100,
        n_total: 100,
        proposals: proposals.clone(),
    };
    let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hits = rank_by_vector(&[page], &q, 100).unwrap();
    let mut expect: Vec<(f64, usize)> = proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d: Vec<f64> = p.descriptor.iter().map(|&x| x as f64).collect();
            let dot: f64 = d.iter().zip(&q).map(|(a, b)| a * b).sum();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt() * q.iter().map(|x| x * x).sum::<f64>().sqrt();
            (dot / n, i)
        })
        .collect();
    expect.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    assert_eq!(hits.len(), 100);
    for (h, (s, i)) in hits.iter().zip(&expect) {
        assert_eq!(h.bbox, proposals[*i].bbox);
        assert!((h.similarity - s).abs() < 1e-12);
    }
}

#[test]
fn ap_with_one_to_one_matching() {
    let gts = vec![
        GroundTruth { page_id: "a".into(), bbox: BBox::from_xywh(0.0, 0.0, 10.0, 10.0), label: "w".into() },
        GroundTruth { page_id: "b".into(), bbox: BBox::from_xywh(0.0, 0.0, 10.0, 10.0), label: "w".into() },
    ];
    let hit = |p: &str, x: f64| Hit { page_id: p.into(), bbox: BBox::from_xywh(x, 0.0, 10.0, 10.0), similarity: 0.0 };
    // duplicate hit on page a only credits once
    let ranked = [hit("a", 0.0), hit("a", 1.0), hit("b", 0.0)];
    let ap = average_precision(&ranked, &gts, "w", 0.5).unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn dtp_finds_isolated_words() {
    use wordspot_core::augment::{synthetic_page, AugmentConfig, MorphElement, MorphOp, SyntheticCorpusConfig};
    let clean = AugmentConfig {
        shear_range: 0.0,
        morph_elements: vec![MorphElement { op: MorphOp::Dilate, size: 1 }],
        canvas_noise_sigma: 0.0,
        background_interval: 0.0,
        word_gap: 24,
        tighten_boxes: true,
        ..AugmentConfig::default()
    };
    let cfg = SyntheticCorpusConfig {
        vocabulary: ["hello", "world", "ink", "page", "quill", "ledger", "abbey", "stone"].iter().map(|s| s.to_string()).collect(),
        words_per_page: 60,
        augment: clean,
        ..SyntheticCorpusConfig::default()
    };
    let (img, gts) = synthetic_page(&cfg, 0).unwrap();
    let props = dtp_proposals(&img, &DtpConfig::default()).unwrap();
    let boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();
    let found = boxes.iter().filter(|g| props.iter().any(|p| wordspot_core::geometry::iou(p, g) >= 0.5)).count();
    assert!(found as f64 >= 0.99 * boxes.len() as f64, "{found}/{}", boxes.len());
}
