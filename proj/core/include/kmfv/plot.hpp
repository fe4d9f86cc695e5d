#pragma once

#include <string>
#include <vector>

#include "kmfv/evalkit.hpp"

namespace kmfv {

// Renders rate-distortion curves (bpp on x, PSNR on y) to an 8-bit RGB PNG.
void render_rd_plot(const std::vector<RDCurve>& curves,
                    const std::string& title, const std::string& path,
                    int width = 720, int height = 540);

} // namespace kmfv
