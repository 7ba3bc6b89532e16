//! Reference implementations written from the definitions, without sharing
//! code with the library. Deliberately naive.

#![allow(dead_code)]

use std::collections::HashMap;

pub type Box4 = [f64; 4];

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

pub fn iou(a: Box4, b: Box4) -> f64 {
    let inter = overlap(a[0], a[2], b[0], b[2]) * overlap(a[1], a[3], b[1], b[3]);
    let area = |r: Box4| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Suppression-style greedy NMS: repeatedly take the best remaining box and
/// delete everything overlapping it too much. Best = highest score, then
/// smaller area, then earlier index. Returns indices in keep order.
pub fn nms(boxes: &[(Box4, f64)], score_threshold: f64, iou_threshold: f64) -> Vec<usize> {
    let area = |r: Box4| (r[2] - r[0]) * (r[3] - r[1]);
    let mut alive: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].1 >= score_threshold).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut best = alive[0];
        for &i in &alive[1..] {
            let (bi, si) = boxes[i];
            let (bb, sb) = boxes[best];
            if si > sb || (si == sb && (area(bi) < area(bb) || (area(bi) == area(bb) && i < best))) {
                best = i;
            }
        }
        kept.push(best);
        alive.retain(|&i| i != best && iou(boxes[i].0, boxes[best].0) <= iou_threshold);
    }
    kept
}

/// 1-D zero-padded correlation of an `[h, w, c]` map along width (`along_w`)
/// or height, by scanning every input position on the line.
pub fn conv_line(f: &[f64], h: usize, w: usize, c: usize, along_w: bool, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let at = |y: usize, x: usize, ch: usize| f[(y * w + x) * c + ch];
    let mut out = vec![0.0; f.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut s = 0.0;
                let (line_len, me) = if along_w { (w, x) } else { (h, y) };
                for j in 0..line_len {
                    let k = j as isize - me as isize + r;
                    if k < 0 || k as usize >= kernel.len() {
                        continue;
                    }
                    let v = if along_w { at(y, j, ch) } else { at(j, x, ch) };
                    s += kernel[k as usize] * v;
                }
                out[(y * w + x) * c + ch] = s;
            }
        }
    }
    out
}

fn count_ngrams(t: &[String], n: usize) -> HashMap<Vec<String>, usize> {
    let mut m = HashMap::new();
    let mut i = 0;
    while i + n <= t.len() {
        *m.entry(t[i..i + n].to_vec()).or_insert(0) += 1;
        i += 1;
    }
    m
}

/// Clipped matches and candidate totals for orders 1..=4.
pub fn bleu_counts(c: &[String], r: &[String]) -> ([usize; 4], [usize; 4]) {
    let mut m = [0; 4];
    let mut t = [0; 4];
    for n in 1..=4 {
        let cc = count_ngrams(c, n);
        let rc = count_ngrams(r, n);
        for (g, k) in &cc {
            m[n - 1] += (*k).min(*rc.get(g).unwrap_or(&0));
            t[n - 1] += k;
        }
    }
    (m, t)
}

pub fn bleu_from_counts(m: [usize; 4], t: [usize; 4], c_len: usize, r_len: usize) -> f64 {
    if c_len == 0 || m[0] == 0 {
        return 0.0;
    }
    let any_zero = m.contains(&0);
    let mut log_p = 0.0;
    for n in 0..4 {
        let p = if n >= 1 && any_zero {
            (m[n] as f64 + 1.0) / (t[n] as f64 + 1.0)
        } else {
            m[n] as f64 / t[n] as f64
        };
        log_p += p.ln() / 4.0;
    }
    let bp = if c_len < r_len { (1.0 - r_len as f64 / c_len as f64).exp() } else { 1.0 };
    bp * log_p.exp()
}

pub fn bleu(c: &[String], r: &[String]) -> f64 {
    let (m, t) = bleu_counts(c, r);
    bleu_from_counts(m, t, c.len(), r.len())
}

/// Pooled corpus BLEU with one reference per candidate.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    let (mut m, mut t) = ([0; 4], [0; 4]);
    let (mut cl, mut rl) = (0, 0);
    for (c, r) in pairs {
        let (pm, pt) = bleu_counts(c, r);
        for n in 0..4 {
            m[n] += pm[n];
            t[n] += pt[n];
        }
        cl += c.len();
        rl += r.len();
    }
    bleu_from_counts(m, t, cl, rl)
}

fn is_subsequence(s: &[&String], of: &[String]) -> bool {
    let mut it = of.iter();
    s.iter().all(|x| it.any(|y| y == *x))
}

/// LCS by trying every subsequence of `a`.
pub fn lcs_exhaustive(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 20, "exhaustive LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if is_subsequence(&sub, b) {
            best = n;
        }
    }
    best
}

pub fn rouge_l(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_exhaustive(c, r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rc) = (l / c.len() as f64, l / r.len() as f64);
    2.0 * p * rc / (p + rc)
}

/// Every one-to-one exact-match alignment; returns (max matches, min chunks
/// among those).
pub fn best_alignment(c: &[String], r: &[String]) -> (usize, usize) {
    fn walk(c: &[String], r: &[String], i: usize, map: &mut Vec<Option<usize>>, used: &mut Vec<bool>, best: &mut (usize, usize)) {
        if i == c.len() {
            let m = map.iter().flatten().count();
            let mut chunks = 0;
            for k in 0..map.len() {
                if let Some(j) = map[k] {
                    let continues = k > 0 && j > 0 && map[k - 1] == Some(j - 1);
                    if !continues {
                        chunks += 1;
                    }
                }
            }
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        map.push(None);
        walk(c, r, i + 1, map, used, best);
        map.pop();
        for j in 0..r.len() {
            if !used[j] && r[j] == c[i] {
                used[j] = true;
                map.push(Some(j));
                walk(c, r, i + 1, map, used, best);
                map.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    walk(c, r, 0, &mut Vec::new(), &mut vec![false; r.len()], &mut best);
    best
}

pub fn meteor(c: &[String], r: &[String]) -> f64 {
    let (m, ch) = best_alignment(c, r);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / c.len() as f64;
    let rc = m as f64 / r.len() as f64;
    // harmonic mean weighting recall nine times precision
    let alpha = 0.9;
    let fmean = p * rc / (alpha * p + (1.0 - alpha) * rc);
    fmean * (1.0 - 0.5 * (ch as f64 / m as f64).powi(3))
}

/// CIDEr with one reference per document.
pub fn cider(cands: &[Vec<String>], refs: &[Vec<String>]) -> Vec<f64> {
    let docs = refs.len() as f64;
    let mut total = vec![0.0; cands.len()];
    for n in 1..=4 {
        let mut df: HashMap<Vec<String>, f64> = HashMap::new();
        for r in refs {
            for g in count_ngrams(r, n).into_keys() {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        let vec_of = |t: &[String]| -> HashMap<Vec<String>, f64> {
            count_ngrams(t, n)
                .into_iter()
                .map(|(g, k)| {
                    let d = df.get(&g).copied().unwrap_or(0.0).max(1.0);
                    let idf = (docs / d).ln();
                    (g, k as f64 * idf)
                })
                .collect()
        };
        for i in 0..cands.len() {
            let a = vec_of(&cands[i]);
            let b = vec_of(&refs[i]);
            let dot: f64 = a.iter().map(|(g, v)| v * b.get(g).copied().unwrap_or(0.0)).sum();
            let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
            if na > 0.0 && nb > 0.0 {
                total[i] += dot / (na * nb) / 4.0;
            }
        }
    }
    total.iter().map(|t| t * 10.0).collect()
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Twenty candidate/reference pairs, lowercase and unpunctuated so the
/// oracles can split on whitespace.
pub const HAND_CORPUS: [(&str, &str); 20] = [
    ("the cat sat on the mat", "the cat sat on the mat"),
    ("the cat is on the mat", "there is a cat on the mat"),
    ("she is happy because she got the job", "she got the job so she is happy"),
    ("he was angry about the broken vase", "he is angry because the vase broke"),
    ("they laughed at the joke", "everyone laughed at his joke"),
    ("a b c d", "a c b d"),
    ("a a a a", "a a"),
    ("the the the", "the cat"),
    ("surprised by the party", "she was surprised by the surprise party"),
    ("sad news about her grandmother", "she heard sad news about her grandmother"),
    ("completely unrelated words here", "nothing in common at all"),
    ("x", "x"),
    ("x y", "y x"),
    ("fear of the dark room", "he fears the dark"),
    ("joy joy joy", "joy"),
    ("disgusted by the smell of the food", "the food smell disgusted him"),
    ("rachel is upset that ross forgot", "ross forgot and rachel is upset"),
    ("one two three four five six", "one two three four five six seven"),
    ("a b a b a b", "b a b a"),
    ("monica was happy with the clean kitchen", "the kitchen was clean and monica was happy"),
];
