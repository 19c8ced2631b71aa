//! ViT-style visual front-ends: a 2D patch encoder, a 3D volumetric patch
//! encoder, and per-slice application of the 2D encoder to volumes.

use serde::{Deserialize, Serialize};

use crate::data::{Image2D, Volume3D};
use crate::error::{Error, Result};
use crate::nn::{Block, LayerNorm, Linear, INIT_STD};
use crate::param::{Module, Parameter};
use crate::rng::SeedTree;
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Encoder2DConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub depth: usize,
    pub heads: usize,
    /// Token width `D_I`.
    pub width: usize,
    pub use_pos_embed: bool,
}

impl Default for Encoder2DConfig {
    fn default() -> Self {
        Encoder2DConfig { image_size: 64, patch_size: 8, channels: 3, depth: 2, heads: 4, width: 64, use_pos_embed: true }
    }
}

impl Encoder2DConfig {
    /// 256×256 inputs with 16×16 patches.
    pub fn full_resolution() -> Self {
        Encoder2DConfig { image_size: 256, patch_size: 16, ..Default::default() }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.channels == 0 || self.width == 0 {
            return Err(Error::Config("encoder channels and width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Encoder3DConfig {
    /// `[N, H, W]`
    pub volume: [usize; 3],
    /// `[depth, height, width]` of one patch.
    pub patch: [usize; 3],
    pub depth: usize,
    pub heads: usize,
    pub width: usize,
    pub use_pos_embed: bool,
}

impl Default for Encoder3DConfig {
    fn default() -> Self {
        Encoder3DConfig { volume: [4, 64, 64], patch: [2, 8, 8], depth: 2, heads: 4, width: 64, use_pos_embed: true }
    }
}

impl Encoder3DConfig {
    /// 32×256×256 volumes with 4×16×16 patches.
    pub fn full_resolution() -> Self {
        Encoder3DConfig { volume: [32, 256, 256], patch: [4, 16, 16], ..Default::default() }
    }

    pub fn grid(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.volume[i] / self.patch[i])
    }

    pub fn num_tokens(&self) -> usize {
        self.grid().iter().product()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.patch[i] == 0 || self.volume[i] % self.patch[i] != 0 || self.volume[i] == 0 {
                return Err(Error::Config(format!(
                    "volume extent {:?} not divisible by patch {:?}",
                    self.volume, self.patch
                )));
            }
        }
        if self.width == 0 {
            return Err(Error::Config("encoder width must be positive".into()));
        }
        Ok(())
    }
}

/// Patch projection, optional learned positions, transformer blocks, final norm.
#[derive(Debug, Clone)]
pub struct PatchTransformer<E: Elem = f32> {
    pub patch_proj: Linear<E>,
    pub pos_embed: Option<Parameter<E>>,
    pub blocks: Vec<Block<E>>,
    pub ln_f: LayerNorm<E>,
}

impl<E: Elem> PatchTransformer<E> {
    #[allow(clippy::too_many_arguments)]
    fn new(prefix: &str, patch_dim: usize, tokens: usize, width: usize, depth: usize, heads: usize, pos: bool, seeds: &SeedTree) -> Result<Self> {
        Ok(PatchTransformer {
            patch_proj: Linear::new(&format!("{prefix}.patch_proj"), patch_dim, width, true, seeds),
            pos_embed: pos.then(|| Parameter::trunc_normal(format!("{prefix}.pos_embed"), &[tokens, width], INIT_STD, seeds)),
            blocks: (0..depth)
                .map(|i| Block::new(&format!("{prefix}.blocks.{i}"), width, heads, seeds))
                .collect::<Result<_>>()?,
            ln_f: LayerNorm::new(&format!("{prefix}.ln_f"), width),
        })
    }

    pub fn forward(&self, patches: &Tensor<E>) -> Result<Tensor<E>> {
        let mut x = self.patch_proj.forward(patches)?;
        if let Some(pos) = &self.pos_embed {
            x = x.add(pos.tensor())?;
        }
        for b in &self.blocks {
            x = b.forward(&x, false, None)?;
        }
        self.ln_f.forward(&x)
    }
}

impl<E: Elem> Module<E> for PatchTransformer<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.patch_proj.visit(f);
        if let Some(p) = &self.pos_embed {
            f(p);
        }
        self.blocks.iter().for_each(|b| b.visit(f));
        self.ln_f.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.patch_proj.visit_mut(f);
        if let Some(p) = &mut self.pos_embed {
            f(p);
        }
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
        self.ln_f.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct Encoder2D<E: Elem = f32> {
    pub cfg: Encoder2DConfig,
    pub net: PatchTransformer<E>,
}

impl<E: Elem> Encoder2D<E> {
    pub fn new(cfg: &Encoder2DConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        let net = PatchTransformer::new("encoder2d", cfg.patch_dim(), cfg.num_tokens(), cfg.width, cfg.depth, cfg.heads, cfg.use_pos_embed, seeds)?;
        Ok(Encoder2D { cfg: cfg.clone(), net })
    }

    /// Non-overlapping patches in row-major grid order, each flattened as
    /// `(row, col, channel)`.
    pub fn patchify(&self, image: &Image2D) -> Result<Tensor<E>> {
        let c = &self.cfg;
        if image.height != c.image_size || image.width != c.image_size || image.channels != c.channels {
            return Err(Error::Dimension {
                op: "encode_2d",
                lhs: vec![image.height, image.width, image.channels],
                rhs: vec![c.image_size, c.image_size, c.channels],
            });
        }
        Ok(self.patchify_with(|y, x, ch| image.at(y, x, ch)))
    }

    fn patchify_with(&self, pixel: impl Fn(usize, usize, usize) -> f32) -> Tensor<E> {
        let c = &self.cfg;
        let (g, p) = (c.grid(), c.patch_size);
        let mut data = Vec::with_capacity(c.num_tokens() * c.patch_dim());
        for gy in 0..g {
            for gx in 0..g {
                for py in 0..p {
                    for px in 0..p {
                        for ch in 0..c.channels {
                            data.push(E::lit(pixel(gy * p + py, gx * p + px, ch) as f64));
                        }
                    }
                }
            }
        }
        Tensor::new(data, &[c.num_tokens(), c.patch_dim()]).expect("patch grid arithmetic")
    }

    /// `[L_I × D_I]` features of one image.
    pub fn encode(&self, image: &Image2D) -> Result<Tensor<E>> {
        self.net.forward(&self.patchify(image)?)
    }

    /// Encodes one single-channel plane, replicated across the input channels.
    pub fn encode_plane(&self, plane: &[f32], height: usize, width: usize) -> Result<Tensor<E>> {
        let c = &self.cfg;
        if height != c.image_size || width != c.image_size || plane.len() != height * width {
            return Err(Error::Dimension {
                op: "encode_slices",
                lhs: vec![height, width],
                rhs: vec![c.image_size, c.image_size],
            });
        }
        self.net.forward(&self.patchify_with(|y, x, _| plane[y * width + x]))
    }

    /// Applies the encoder to each slice independently: `[N × L_I × D_I]`.
    pub fn encode_slices(&self, volume: &Volume3D) -> Result<Tensor<E>> {
        if volume.slices == 0 {
            return Err(Error::Shape("volume without slices".into()));
        }
        let blocks = (0..volume.slices)
            .map(|j| self.encode_plane(volume.slice(j), volume.height, volume.width))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor<E>> = blocks.iter().collect();
        Tensor::concat(&refs)?.reshape(&[volume.slices, self.cfg.num_tokens(), self.cfg.width])
    }
}

impl<E: Elem> Module<E> for Encoder2D<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.net.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.net.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct Encoder3D<E: Elem = f32> {
    pub cfg: Encoder3DConfig,
    pub net: PatchTransformer<E>,
}

impl<E: Elem> Encoder3D<E> {
    pub fn new(cfg: &Encoder3DConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        let net = PatchTransformer::new("encoder3d", cfg.patch_dim(), cfg.num_tokens(), cfg.width, cfg.depth, cfg.heads, cfg.use_pos_embed, seeds)?;
        Ok(Encoder3D { cfg: cfg.clone(), net })
    }

    /// 3D patches in `(slab, row, col)` grid order, flattened `(z, y, x)`.
    pub fn patchify(&self, volume: &Volume3D) -> Result<Tensor<E>> {
        let c = &self.cfg;
        if [volume.slices, volume.height, volume.width] != c.volume {
            return Err(Error::Dimension {
                op: "encode_3d",
                lhs: vec![volume.slices, volume.height, volume.width],
                rhs: c.volume.to_vec(),
            });
        }
        let [gz, gy, gx] = c.grid();
        let [pz, py, px] = c.patch;
        let mut data = Vec::with_capacity(c.num_tokens() * c.patch_dim());
        for iz in 0..gz {
            for iy in 0..gy {
                for ix in 0..gx {
                    for z in 0..pz {
                        for y in 0..py {
                            let row = ((iz * pz + z) * volume.height + iy * py + y) * volume.width + ix * px;
                            data.extend(volume.data[row..row + px].iter().map(|&v| E::lit(v as f64)));
                        }
                    }
                }
            }
        }
        Tensor::new(data, &[c.num_tokens(), c.patch_dim()])
    }

    /// `[L_I^(3D) × D_I]` features of one volume.
    pub fn encode(&self, volume: &Volume3D) -> Result<Tensor<E>> {
        self.net.forward(&self.patchify(volume)?)
    }
}

impl<E: Elem> Module<E> for Encoder3D<E> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter<E>)) {
        self.net.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<E>)) {
        self.net.visit_mut(f);
    }
}
