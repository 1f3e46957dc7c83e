//! Browser demo: orbit a segmentable splat scene, show its 2D instance
//! masks, and click an object to select it in 3D.

pub mod demo;

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    use crate::demo::{DemoState, VIEW_SIZE};

    fn js(e: splatseg::Error) -> JsError {
        JsError::new(&e.to_string())
    }

    #[wasm_bindgen]
    pub struct Viewer {
        state: DemoState,
    }

    #[wasm_bindgen]
    impl Viewer {
        /// Starts on the built-in synthetic scene.
        #[wasm_bindgen(constructor)]
        pub fn new(seed: u32) -> Result<Viewer, JsError> {
            Ok(Viewer {
                state: DemoState::synthetic(seed as u64).map_err(js)?,
            })
        }

        #[wasm_bindgen(js_name = fromPly)]
        pub fn from_ply(bytes: &[u8]) -> Result<Viewer, JsError> {
            Ok(Viewer {
                state: DemoState::from_ply(bytes).map_err(js)?,
            })
        }

        pub fn size() -> u32 {
            VIEW_SIZE as u32
        }

        #[wasm_bindgen(js_name = gaussianCount)]
        pub fn gaussian_count(&self) -> u32 {
            self.state.gaussian_count() as u32
        }

        pub fn orbit(&mut self, azimuth_deg: f64, elevation_deg: f64) {
            self.state.orbit(azimuth_deg, elevation_deg);
        }

        /// RGBA pixels of the current view.
        pub fn render(&self) -> Result<Vec<u8>, JsError> {
            self.state.render().map_err(js)
        }

        /// RGBA instance overlay at the current threshold.
        pub fn segment(&self) -> Result<Vec<u8>, JsError> {
            self.state.segment().map(|(pixels, _)| pixels).map_err(js)
        }

        /// Selection size, or -1 when the click hits background.
        pub fn click(&mut self, x: u32, y: u32) -> i32 {
            self.state.click(x as usize, y as usize).map_or(-1, |n| n as i32)
        }

        #[wasm_bindgen(js_name = setThreshold)]
        pub fn set_threshold(&mut self, t: f64) -> Result<u32, JsError> {
            self.state.set_threshold(t).map(|n| n as u32).map_err(js)
        }

        #[wasm_bindgen(js_name = clearSelection)]
        pub fn clear_selection(&mut self) {
            self.state.clear_selection();
        }

        #[wasm_bindgen(js_name = exportSelection)]
        pub fn export_selection(&self) -> Result<Vec<u8>, JsError> {
            self.state.export_selection().map_err(js)
        }
    }
}
