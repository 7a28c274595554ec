use rand::Rng;

use super::FeatureGrid;
use crate::error::{Error, Result};
use crate::tensor::{Eager, Ops, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One valid (unpadded) convolution of the toy encoder.
///
/// `kernels` is `[K, kh, kw, C_in]` with odd `kh`, `kw`; `bias` is `[K]`.
#[derive(Debug, Clone)]
pub struct ConvLayer<V = Tensor> {
    pub kernels: V,
    pub bias: V,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvLayer<Tensor> {
    pub fn new(kernels: Tensor, bias: Tensor, stride: usize, activation: Activation) -> Result<Self> {
        let &[k, kh, kw, _] = kernels.shape() else {
            return Err(Error::InvalidArgument(format!(
                "conv kernels must be [K, kh, kw, C], got {:?}",
                kernels.shape()
            )));
        };
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel {kh}x{kw} must have odd sides")));
        }
        if bias.shape() != [k] {
            return Err(Error::InvalidArgument(format!("bias must be [{k}]")));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        Ok(Self {
            kernels,
            bias,
            stride,
            activation,
        })
    }

    /// He-uniform kernels, zero bias.
    pub fn random(
        filters: usize,
        size: usize,
        in_channels: usize,
        stride: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = (6.0 / (size * size * in_channels) as f64).sqrt();
        let kernels = Tensor::uniform(&[filters, size, size, in_channels], -bound, bound, rng);
        Self::new(kernels, Tensor::zeros(&[filters]), stride, activation)
    }
}

/// Runs the conv stack over an `[H, W, C]` image and flattens the final
/// `[H', W', D]` map into `[H'·W', D]`.
pub fn toy_encode<O: Ops>(ops: &mut O, image: &O::V, layers: &[ConvLayer<O::V>]) -> Result<O::V> {
    let mut x = image.clone();
    for (i, layer) in layers.iter().enumerate() {
        x = ops
            .conv2d(&x, &layer.kernels, &layer.bias, layer.stride)
            .map_err(|e| match e {
                TensorError::Invalid(msg) => {
                    Error::InvalidArgument(format!("toy encoder layer {i}: dimension underflow ({msg})"))
                }
                other => other.into(),
            })?;
        if layer.activation == Activation::Relu {
            x = ops.relu(&x);
        }
    }
    let &[h, w, d] = ops.value(&x).shape() else {
        return Err(Error::InvalidArgument(format!(
            "toy encoder needs an [H, W, C] image, got {:?}",
            ops.value(image).shape()
        )));
    };
    Ok(ops.reshape(&x, &[h * w, d])?)
}

pub fn toy_encode_grid(image_id: &str, image: &Tensor, layers: &[ConvLayer]) -> Result<FeatureGrid> {
    let values = toy_encode(&mut Eager, image, layers)?;
    FeatureGrid::new(image_id, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::GradCheck;
    use crate::tensor::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop valid convolution.
    fn brute_conv(img: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> Tensor {
        let (h, w, c) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        let (nk, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let oh = (h - kh) / stride + 1;
        let ow = (w - kw) / stride + 1;
        let mut out = vec![0.0; oh * ow * nk];
        for y in 0..oh {
            for x in 0..ow {
                for f in 0..nk {
                    let mut s = b.data()[f];
                    for i in 0..kh {
                        for j in 0..kw {
                            for ch in 0..c {
                                let iv = img.data()[((y * stride + i) * w + x * stride + j) * c + ch];
                                let kv = k.data()[((f * kh + i) * kw + j) * c + ch];
                                s += iv * kv;
                            }
                        }
                    }
                    out[(y * ow + x) * nk + f] = s;
                }
            }
        }
        Tensor::new(vec![oh, ow, nk], out).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Tensor::uniform(&[3, 4, 2], -1.0, 1.0, &mut rng);
        let mut k = Tensor::zeros(&[2, 1, 1, 2]);
        k.data_mut()[0] = 1.0;
        k.data_mut()[3] = 1.0;
        let layer = ConvLayer::new(k, Tensor::zeros(&[2]), 1, Activation::Identity).unwrap();
        let g = toy_encode_grid("i", &img, &[layer]).unwrap();
        assert_eq!(g.values, img.reshape(&[12, 2]).unwrap());
    }

    #[test]
    fn zero_kernels_give_constant_bias() {
        let img = Tensor::full(&[5, 5, 3], 7.0);
        let layer = ConvLayer::new(
            Tensor::zeros(&[4, 3, 3, 3]),
            Tensor::full(&[4], 0.25),
            1,
            Activation::Relu,
        )
        .unwrap();
        let g = toy_encode_grid("i", &img, &[layer]).unwrap();
        assert_eq!(g.values, Tensor::full(&[9, 4], 0.25));
    }

    #[test]
    fn matches_brute_force_on_random_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for stride in [1, 2] {
            let img = Tensor::uniform(&[8, 8, 3], -1.0, 1.0, &mut rng);
            let layer = ConvLayer::random(5, 3, 3, stride, Activation::Identity, &mut rng).unwrap();
            let got = toy_encode(&mut Eager, &img, std::slice::from_ref(&layer)).unwrap();
            let want = brute_conv(&img, &layer.kernels, &layer.bias, stride);
            let want = want.reshape(&[want.shape()[0] * want.shape()[1], 5]).unwrap();
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn even_kernel_and_underflow_rejected() {
        assert!(ConvLayer::new(Tensor::zeros(&[1, 2, 2, 1]), Tensor::zeros(&[1]), 1, Activation::Relu).is_err());
        let layer = ConvLayer::new(Tensor::zeros(&[1, 5, 5, 1]), Tensor::zeros(&[1]), 1, Activation::Relu).unwrap();
        let err = toy_encode_grid("i", &Tensor::zeros(&[3, 3, 1]), &[layer]).unwrap_err();
        assert!(err.to_string().contains("underflow"), "{err}");
    }

    #[test]
    fn kernel_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = Tensor::uniform(&[6, 6, 2], -2.0, 2.0, &mut rng);
        let k1 = Tensor::uniform(&[3, 3, 3, 2], -1.0, 1.0, &mut rng);
        let b1 = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
        let k2 = Tensor::uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut rng);
        let b2 = Tensor::uniform(&[2], -1.0, 1.0, &mut rng);
        let r = GradCheck::default()
            .run(&[img, k1, b1, k2, b2], |t: &mut Tape, v| {
                let layers = [
                    ConvLayer { kernels: v[1], bias: v[2], stride: 1, activation: Activation::Identity },
                    ConvLayer { kernels: v[3], bias: v[4], stride: 1, activation: Activation::Identity },
                ];
                let out = toy_encode(t, &v[0], &layers).map_err(|e| TensorError::Invalid(e.to_string()))?;
                let th = t.tanh(out);
                Ok(t.sum_all(th))
            })
            .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}
