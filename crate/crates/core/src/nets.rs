//! Configurable encoder-decoder segmentation networks with named feature
//! taps, and the model container file.
//!
//! Stage recipe:
//!
//! - encoder stage: conv3×3 → ReLU → conv3×3 → ReLU → avg-pool 2
//! - decoder stage: nearest-upsample 2 → (skip concat) → conv3×3 → ReLU
//! - head: conv1×1 to `num_classes`
//!
//! Every stage output is recorded as a tap (`enc1..encD`, `dec1..decD`).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::io::{decode_tensor_from, encode_tensor, ByteReader, DType};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Declarative description of one network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Number of encoder (and decoder) stages, 2..=4.
    pub depth: usize,
    pub base_channels: usize,
    pub channel_growth: usize,
    pub num_classes: usize,
    pub use_skips: bool,
    pub seed: u64,
}

impl NetworkConfig {
    /// Depth 3, 16 base channels, skips on (≈109k parameters for 2 classes).
    pub fn teacher(num_classes: usize, seed: u64) -> Self {
        NetworkConfig {
            depth: 3,
            base_channels: 16,
            channel_growth: 2,
            num_classes,
            use_skips: true,
            seed,
        }
    }

    /// Depth 2, 4 base channels, no skips (≈1.5k parameters for 2 classes).
    pub fn student(num_classes: usize, seed: u64) -> Self {
        NetworkConfig {
            depth: 2,
            base_channels: 4,
            channel_growth: 2,
            num_classes,
            use_skips: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.depth) {
            return Err(Error::Config(format!(
                "depth must be in 2..=4, got {}",
                self.depth
            )));
        }
        if self.base_channels < 1 || self.channel_growth < 1 {
            return Err(Error::Config(
                "base_channels and channel_growth must be ≥ 1".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be ≥ 2, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Output channels of encoder stage `i` (1-based).
    pub fn enc_channels(&self, i: usize) -> usize {
        self.base_channels * self.channel_growth.pow(i as u32 - 1)
    }

    /// Output channels of decoder stage `k` (1-based): mirrors the encoder
    /// stage at the same resolution, and `base_channels` at full resolution.
    pub fn dec_channels(&self, k: usize) -> usize {
        if k < self.depth {
            self.enc_channels(self.depth - k)
        } else {
            self.base_channels
        }
    }

    /// Encoder stage whose output shares decoder stage `k`'s resolution.
    fn skip_partner(&self, k: usize) -> Option<usize> {
        (self.use_skips && k < self.depth).then(|| self.depth - k)
    }
}

/// Named stage outputs of one forward pass, in execution order.
#[derive(Debug, Clone, Default)]
pub struct FeatureTaps(Vec<(String, Tensor)>);

impl FeatureTaps {
    pub fn new(taps: Vec<(String, Tensor)>) -> Result<Self> {
        for (i, (name, _)) in taps.iter().enumerate() {
            if taps[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Param(format!("duplicate tap name {name}")));
            }
        }
        Ok(FeatureTaps(taps))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.0.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(name, h, w)` for every tap.
    pub fn spatial(&self) -> Vec<(String, usize, usize)> {
        self.0
            .iter()
            .map(|(n, t)| {
                let s = t.shape();
                (n.clone(), s[s.len() - 2], s[s.len() - 1])
            })
            .collect()
    }

    /// Keeps only the named taps.
    pub fn retain(&self, names: &[&str]) -> FeatureTaps {
        FeatureTaps(
            self.0
                .iter()
                .filter(|(n, _)| names.contains(&n.as_str()))
                .cloned()
                .collect(),
        )
    }
}

/// How student and teacher taps are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TapPolicy {
    /// The earliest and the latest spatially matching pairs.
    #[default]
    FirstAndLast,
    /// Every spatially matching (student, teacher) pair.
    AllSameSize,
}

impl std::str::FromStr for TapPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_and_last" => Ok(TapPolicy::FirstAndLast),
            "all_same_size" => Ok(TapPolicy::AllSameSize),
            _ => Err(Error::Config(format!("unknown tap policy {s:?}"))),
        }
    }
}

impl std::fmt::Display for TapPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TapPolicy::FirstAndLast => "first_and_last",
            TapPolicy::AllSameSize => "all_same_size",
        })
    }
}

/// `(student_tap, teacher_tap)` pairs fed to the feature distillation terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapPairing {
    pub pairs: Vec<(String, String)>,
}

/// Pairs taps with equal spatial extents according to `policy`.
pub fn match_taps(
    student: &[(String, usize, usize)],
    teacher: &[(String, usize, usize)],
    policy: TapPolicy,
) -> Result<TapPairing> {
    if student.is_empty() || teacher.is_empty() {
        return Err(Error::Pairing("empty tap list".into()));
    }
    let mut all = Vec::new();
    for (sn, sh, sw) in student {
        for (tn, th, tw) in teacher {
            if sh == th && sw == tw {
                all.push((sn.clone(), tn.clone()));
            }
        }
    }
    if all.is_empty() {
        let fmt = |l: &[(String, usize, usize)]| {
            l.iter()
                .map(|(n, h, w)| format!("{n}:{h}x{w}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(Error::Pairing(format!(
            "no spatially compatible taps; student [{}], teacher [{}]",
            fmt(student),
            fmt(teacher)
        )));
    }
    let pairs = match policy {
        TapPolicy::AllSameSize => all,
        TapPolicy::FirstAndLast => {
            let first = all[0].clone();
            let last = all[all.len() - 1].clone();
            if first == last {
                vec![first]
            } else {
                vec![first, last]
            }
        }
    };
    Ok(TapPairing { pairs })
}

struct Conv {
    weight: usize,
    bias: usize,
    pad: usize,
}

/// An encoder-decoder network. Parameters are immutable tensors; training
/// replaces them wholesale via [`Network::set_params`].
#[derive(Clone)]
pub struct Network {
    cfg: NetworkConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("cfg", &self.cfg)
            .field("params", &self.count_params())
            .finish()
    }
}

/// Parameter names and shapes in initialization order.
fn layout(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut conv = |name: String, cin: usize, cout: usize, k: usize| {
        out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
        out.push((format!("{name}.bias"), vec![cout]));
    };
    let mut cin = 1;
    for i in 1..=cfg.depth {
        let c = cfg.enc_channels(i);
        conv(format!("enc{i}.conv1"), cin, c, 3);
        conv(format!("enc{i}.conv2"), c, c, 3);
        cin = c;
    }
    for k in 1..=cfg.depth {
        let skip = cfg.skip_partner(k).map_or(0, |j| cfg.enc_channels(j));
        let c = cfg.dec_channels(k);
        conv(format!("dec{k}.conv"), cin + skip, c, 3);
        cin = c;
    }
    conv("head".into(), cin, cfg.num_classes, 1);
    out
}

impl Network {
    /// Builds a network with weights and biases drawn uniformly from
    /// `±sqrt(1 / fan_in)`, a pure function of the config (incl. seed).
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        let lay = layout(&cfg);
        for pair in lay.chunks(2) {
            let (wname, wshape) = &pair[0];
            let (bname, bshape) = &pair[1];
            let fan_in: usize = wshape[1..].iter().product();
            let bound = (1.0 / fan_in as f64).sqrt();
            let mut draw = |n: usize| {
                (0..n)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect::<Vec<f64>>()
            };
            let w = draw(wshape.iter().product());
            let b = draw(bshape[0]);
            names.push(wname.clone());
            params.push(Tensor::param(w, wshape)?);
            names.push(bname.clone());
            params.push(Tensor::param(b, bshape)?);
        }
        Ok(Network { cfg, names, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Replaces all parameters; shapes must match the layout.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for ((old, new), name) in self.params.iter().zip(&params).zip(&self.names) {
            if old.shape() != new.shape() {
                return Err(Error::Shape(format!(
                    "{name}: expected {:?}, got {:?}",
                    old.shape(),
                    new.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Copy whose parameters are constants: forward passes record no tape
    /// and gradients can never reach them.
    pub fn frozen(&self) -> Network {
        Network {
            cfg: self.cfg.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::detach).collect(),
        }
    }

    /// Copy whose parameters are trainable leaves.
    pub fn trainable(&self) -> Network {
        Network {
            cfg: self.cfg.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(|p| p.requires_grad_(true)).collect(),
        }
    }

    pub fn count_params(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    fn conv(&self, x: &Tensor, c: &Conv) -> Result<Tensor> {
        x.conv2d(&self.params[c.weight], Some(&self.params[c.bias]), 1, c.pad)
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let s = input.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::Shape(format!(
                "network input must be [N, 1, H, W], got {s:?}"
            )));
        }
        let f = 1 << self.cfg.depth;
        if !s[2].is_multiple_of(f) || !s[3].is_multiple_of(f) {
            return Err(Error::Shape(format!(
                "input extent {}×{} not divisible by 2^depth = {f}",
                s[2], s[3]
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_taps(input)?.0)
    }

    /// Logits `[N, C, H, W]` plus every stage output.
    pub fn forward_with_taps(&self, input: &Tensor) -> Result<(Tensor, FeatureTaps)> {
        self.check_input(input)?;
        let d = self.cfg.depth;
        let mut idx = 0;
        let mut next = |pad: usize| {
            let c = Conv {
                weight: idx,
                bias: idx + 1,
                pad,
            };
            idx += 2;
            c
        };
        let mut taps = Vec::with_capacity(2 * d);
        let mut enc_out: Vec<Tensor> = Vec::with_capacity(d);
        let mut x = input.clone();
        for i in 1..=d {
            let (c1, c2) = (next(1), next(1));
            x = self.conv(&x, &c1)?.relu();
            x = self.conv(&x, &c2)?.relu();
            x = x.avg_pool2d(2)?;
            taps.push((format!("enc{i}"), x.clone()));
            enc_out.push(x.clone());
        }
        for k in 1..=d {
            let c = next(1);
            x = x.upsample_nearest(2)?;
            if let Some(j) = self.cfg.skip_partner(k) {
                x = Tensor::concat(&[&x, &enc_out[j - 1]], 1)?;
            }
            x = self.conv(&x, &c)?.relu();
            taps.push((format!("dec{k}"), x.clone()));
        }
        let head = next(0);
        let logits = self.conv(&x, &head)?;
        Ok((logits, FeatureTaps::new(taps)?))
    }

    /// Tap names and spatial extents for an `h × w` input, without running
    /// the network.
    pub fn tap_extents(&self, h: usize, w: usize) -> Vec<(String, usize, usize)> {
        let d = self.cfg.depth;
        let mut out = Vec::new();
        for i in 1..=d {
            out.push((format!("enc{i}"), h >> i, w >> i));
        }
        for k in 1..=d {
            out.push((format!("dec{k}"), h >> (d - k), w >> (d - k)));
        }
        out
    }
}

pub const MODEL_MAGIC: &[u8; 4] = b"EMKM";
pub const MODEL_VERSION: u32 = 1;
/// Record holding the architecture; excluded from parameter counts.
pub const CONFIG_RECORD: &str = "meta.config";

fn config_tensor(cfg: &NetworkConfig) -> Tensor {
    let v = vec![
        cfg.depth as f64,
        cfg.base_channels as f64,
        cfg.channel_growth as f64,
        cfg.num_classes as f64,
        cfg.use_skips as u8 as f64,
        (cfg.seed >> 32) as f64,
        (cfg.seed & 0xffff_ffff) as f64,
    ];
    Tensor::new(v, &[7]).expect("static shape")
}

fn config_from_tensor(t: &Tensor) -> Result<NetworkConfig> {
    let v = t.data();
    if v.len() != 7 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
        return Err(Error::Format {
            offset: 0,
            msg: "malformed meta.config record".into(),
        });
    }
    Ok(NetworkConfig {
        depth: v[0] as usize,
        base_channels: v[1] as usize,
        channel_growth: v[2] as usize,
        num_classes: v[3] as usize,
        use_skips: v[4] != 0.0,
        seed: ((v[5] as u64) << 32) | v[6] as u64,
    })
}

/// Serializes the architecture and every parameter (64-bit payloads).
pub fn encode_model(net: &Network) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.params.len() as u32 + 1).to_le_bytes());
    let mut record = |name: &str, t: &Tensor| {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        encode_tensor(t, DType::F64, &mut buf);
    };
    record(CONFIG_RECORD, &config_tensor(&net.cfg));
    for (name, p) in net.names.iter().zip(&net.params) {
        record(name, p);
    }
    buf
}

/// Raw `(name, tensor)` records of a model file.
pub fn decode_model_records(buf: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = ByteReader::new(buf);
    r.magic(MODEL_MAGIC)?;
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return r.fail(format!("unsupported model version {version}"));
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let at = r.pos();
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format {
                offset: at,
                msg: "record name is not UTF-8".into(),
            })?
            .to_string();
        let (t, _) = decode_tensor_from(&mut r)?;
        out.push((name, t));
    }
    if !r.is_empty() {
        return r.fail("trailing bytes after last record");
    }
    Ok(out)
}

/// Rebuilds a network from a model file. Parameters come back trainable.
pub fn decode_model(buf: &[u8]) -> Result<Network> {
    let records = decode_model_records(buf)?;
    let (_, cfg_t) = records
        .iter()
        .find(|(n, _)| n == CONFIG_RECORD)
        .ok_or_else(|| Error::Format {
            offset: 0,
            msg: "missing meta.config record".into(),
        })?;
    let cfg = config_from_tensor(cfg_t)?;
    let mut net = Network::new(cfg)?;
    let mut params = Vec::with_capacity(net.params.len());
    for name in &net.names {
        let (_, t) = records
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Format {
                offset: 0,
                msg: format!("missing parameter record {name}"),
            })?;
        params.push(t.requires_grad_(true));
    }
    net.set_params(params)?;
    Ok(net)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Network> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(depth: usize, base: usize) -> NetworkConfig {
        NetworkConfig {
            depth,
            base_channels: base,
            channel_growth: 2,
            num_classes: 2,
            use_skips: false,
            seed: 7,
        }
    }

    #[test]
    fn logits_keep_input_extent() {
        let net = Network::new(cfg(2, 4)).unwrap();
        let x = Tensor::zeros(&[1, 1, 32, 32]).unwrap();
        assert_eq!(net.forward(&x).unwrap().shape(), &[1, 2, 32, 32]);
        let x = Tensor::zeros(&[3, 1, 8, 16]).unwrap();
        assert_eq!(net.forward(&x).unwrap().shape(), &[3, 2, 8, 16]);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = Network::new(cfg(3, 4)).unwrap();
        let b = Network::new(cfg(3, 4)).unwrap();
        for (p, q) in a.params().iter().zip(b.params()) {
            assert_eq!(p.data(), q.data());
        }
        let c = Network::new(NetworkConfig {
            seed: 8,
            ..cfg(3, 4)
        })
        .unwrap();
        assert_ne!(a.params()[0].data(), c.params()[0].data());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = Network::new(cfg(2, 4)).unwrap();
        for p in net.params() {
            let fan_in: usize = if p.rank() == 4 {
                p.shape()[1..].iter().product()
            } else {
                0
            };
            if fan_in > 0 {
                let bound = (1.0 / fan_in as f64).sqrt();
                assert!(p.data().iter().all(|v| v.abs() <= bound));
            }
        }
    }

    #[test]
    fn wider_and_deeper_nets_have_more_params() {
        let n = |d, b| Network::new(cfg(d, b)).unwrap().count_params();
        assert!(n(3, 16) > n(3, 4));
        assert!(n(2, 8) > n(2, 4));
        let teacher = Network::new(NetworkConfig::teacher(2, 0))
            .unwrap()
            .count_params();
        let student = Network::new(NetworkConfig::student(2, 0))
            .unwrap()
            .count_params();
        assert!(teacher >= 20 * student, "{teacher} vs {student}");
    }

    #[test]
    fn taps_follow_stride_bookkeeping() {
        let net = Network::new(cfg(2, 4)).unwrap();
        let x = Tensor::zeros(&[1, 1, 32, 32]).unwrap();
        let (_, taps) = net.forward_with_taps(&x).unwrap();
        assert_eq!(taps.len(), 4);
        let sizes: Vec<_> = taps.spatial().into_iter().map(|(n, h, _)| (n, h)).collect();
        assert_eq!(
            sizes,
            vec![
                ("enc1".into(), 16),
                ("enc2".into(), 8),
                ("dec1".into(), 16),
                ("dec2".into(), 32)
            ]
        );
        assert_eq!(taps.spatial(), net.tap_extents(32, 32));
        let chans: Vec<_> = taps.iter().map(|(_, t)| t.shape()[1]).collect();
        assert_eq!(chans, vec![4, 8, 4, 4]);
    }

    #[test]
    fn forward_is_pure() {
        let net = Network::new(NetworkConfig::teacher(3, 1)).unwrap();
        let x = Tensor::new(
            (0..256).map(|i| (i as f64 * 0.3).sin()).collect(),
            &[1, 1, 16, 16],
        )
        .unwrap();
        let (l1, t1) = net.forward_with_taps(&x).unwrap();
        let (l2, t2) = net.forward_with_taps(&x).unwrap();
        assert_eq!(l1.data(), l2.data());
        for ((_, a), (_, b)) in t1.iter().zip(t2.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn rejects_indivisible_input() {
        let net = Network::new(cfg(3, 2)).unwrap();
        let x = Tensor::zeros(&[1, 1, 12, 16]).unwrap();
        assert!(matches!(net.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(Network::new(cfg(1, 4)).is_err());
        assert!(Network::new(cfg(2, 0)).is_err());
        assert!(Network::new(NetworkConfig {
            num_classes: 1,
            ..cfg(2, 4)
        })
        .is_err());
    }

    #[test]
    fn tap_matching_policies() {
        let l = |v: &[(&str, usize)]| {
            v.iter()
                .map(|(n, s)| (n.to_string(), *s, *s))
                .collect::<Vec<_>>()
        };
        let s = l(&[("enc1", 16), ("enc2", 8), ("dec1", 16), ("dec2", 32)]);
        let p = match_taps(&s, &s, TapPolicy::FirstAndLast).unwrap();
        assert_eq!(
            p.pairs,
            vec![
                ("enc1".into(), "enc1".into()),
                ("dec2".into(), "dec2".into())
            ]
        );
        let all = match_taps(&s, &s, TapPolicy::AllSameSize).unwrap();
        assert_eq!(all.pairs.len(), 6);
        let one = l(&[("enc1", 4)]);
        assert_eq!(
            match_taps(&one, &one, TapPolicy::FirstAndLast)
                .unwrap()
                .pairs
                .len(),
            1
        );
        let err =
            match_taps(&l(&[("a", 7)]), &l(&[("b", 8)]), TapPolicy::FirstAndLast).unwrap_err();
        assert!(matches!(err, Error::Pairing(ref m) if m.contains("a:7x7") && m.contains("b:8x8")));
    }

    #[test]
    fn student_teacher_presets_pair_first_and_last() {
        let t = Network::new(NetworkConfig::teacher(2, 0)).unwrap();
        let s = Network::new(NetworkConfig::student(2, 0)).unwrap();
        let p = match_taps(
            &s.tap_extents(64, 64),
            &t.tap_extents(64, 64),
            TapPolicy::FirstAndLast,
        )
        .unwrap();
        assert_eq!(
            p.pairs,
            vec![
                ("enc1".into(), "enc1".into()),
                ("dec2".into(), "dec3".into())
            ]
        );
    }

    #[test]
    fn model_file_round_trip_and_recount() {
        let net = Network::new(NetworkConfig::student(3, 99)).unwrap();
        let buf = encode_model(&net);
        assert_eq!(&buf[..4], b"EMKM");
        let records = decode_model_records(&buf).unwrap();
        let recount: usize = records
            .iter()
            .filter(|(n, _)| n != CONFIG_RECORD)
            .map(|(_, t)| t.numel())
            .sum();
        assert_eq!(recount, net.count_params());
        let back = decode_model(&buf).unwrap();
        assert_eq!(back.config(), net.config());
        for (a, b) in back.params().iter().zip(net.params()) {
            assert_eq!(a.data(), b.data());
        }
        assert!(decode_model(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn single_pointwise_conv_param_count() {
        // one 1×1×1×1 kernel plus bias
        let w = Tensor::param(vec![0.5], &[1, 1, 1, 1]).unwrap();
        let b = Tensor::param(vec![0.1], &[1]).unwrap();
        assert_eq!(w.numel() + b.numel(), 2);
    }
}
