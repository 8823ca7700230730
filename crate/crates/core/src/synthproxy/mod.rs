//! Edge maps for the 4-channel input variant and a tunable stand-in for the
//! view synthesizer.

mod canny;
mod image;
mod pnm;
mod proxy;

pub use self::canny::{canny, canny_trace, CannyParams, CannyTrace};
pub use self::image::{stack_4channel, to_grayscale, EdgeMap, GrayImage, LUMA_WEIGHTS};
pub use self::pnm::{read_edge_map, read_gray, read_rgb, write_edge_map, write_gray, write_rgb};
pub use self::proxy::{proxy_synthesize, ProxyConfig};
