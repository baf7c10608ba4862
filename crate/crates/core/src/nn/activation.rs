use std::fmt;

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
    Sigmoid,
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn leaky(slope: f64) -> Self {
        assert!(slope > 0.0 && slope < 1.0, "leaky slope must lie in (0, 1), got {slope}");
        Activation::LeakyRelu { slope }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    /// Keras class name, used in model summaries.
    pub fn class_name(self) -> &'static str {
        match self {
            Activation::LeakyRelu { .. } => "LeakyReLU",
            Activation::Relu => "ReLU",
            Activation::Tanh | Activation::Sigmoid => "Activation",
        }
    }

    pub(crate) fn layer_stem(self) -> &'static str {
        match self {
            Activation::LeakyRelu { .. } => "leaky_re_lu",
            Activation::Relu => "re_lu",
            Activation::Tanh | Activation::Sigmoid => "activation",
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu({slope})"),
            Activation::Relu => f.write_str("relu"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitions() {
        let leaky = Activation::leaky(0.2);
        assert_eq!(leaky.apply(-1.0), -0.2);
        assert_eq!(leaky.apply(2.0), 2.0);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
    }

    #[test]
    fn sigmoid_open_interval_for_moderate_inputs() {
        for x in [-30.0, -5.0, 0.0, 5.0, 30.0] {
            let y = Activation::Sigmoid.apply(x);
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    #[should_panic]
    fn leaky_slope_bounds() {
        Activation::leaky(1.0);
    }
}
