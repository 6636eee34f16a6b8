#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <png.h>

#include "rng.hpp"
#include "tensor.hpp"

namespace fedjscc {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One client's data slice. Labels exist only to drive heterogeneous
// sharding; the reconstruction loss never reads them.
struct DatasetShard {
    std::vector<Tensor> images;
    std::vector<int> labels;
};

namespace detail {

// Procedural image families; the class id is the pattern family.
inline Tensor synth_image(std::size_t h, std::size_t w, int cls, RngStream& rng) {
    Tensor img({h, w, 3});
    auto px = [&](std::size_t i, std::size_t j, std::size_t c) -> double& {
        return img.data[(i * w + j) * 3 + c];
    };
    double c0[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    double c1[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    switch (cls % 4) {
        case 0: {  // linear gradient at a random angle
            double ang = rng.uniform() * 6.283185307179586;
            double dx = std::cos(ang), dy = std::sin(ang);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    double t = 0.5 + 0.5 * (dx * ((double)j / w - 0.5) +
                                            dy * ((double)i / h - 0.5)) * 2.0;
                    t = std::min(std::max(t, 0.0), 1.0);
                    for (int c = 0; c < 3; ++c)
                        px(i, j, c) = c0[c] * (1 - t) + c1[c] * t;
                }
            break;
        }
        case 1: {  // checkerboard
            std::size_t cell = 2 + rng.index(4);
            std::size_t pi = rng.index(cell), pj = rng.index(cell);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    bool on = (((i + pi) / cell) + ((j + pj) / cell)) % 2 == 0;
                    for (int c = 0; c < 3; ++c) px(i, j, c) = on ? c0[c] : c1[c];
                }
            break;
        }
        case 2: {  // gaussian blob on a flat background
            double ci = rng.uniform() * h, cj = rng.uniform() * w;
            double s = (0.1 + 0.2 * rng.uniform()) * (double)std::min(h, w);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    double d2 = ((double)i - ci) * ((double)i - ci) +
                                ((double)j - cj) * ((double)j - cj);
                    double t = std::exp(-d2 / (2 * s * s));
                    for (int c = 0; c < 3; ++c)
                        px(i, j, c) = c1[c] * (1 - t) + c0[c] * t;
                }
            break;
        }
        default: {  // sinusoidal stripes
            double freq = 1.0 + 3.0 * rng.uniform();
            double ang = rng.uniform() * 3.141592653589793;
            double dx = std::cos(ang), dy = std::sin(ang);
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    double ph = 6.283185307179586 * freq *
                                (dx * (double)j / w + dy * (double)i / h);
                    double t = 0.5 + 0.5 * std::sin(ph);
                    for (int c = 0; c < 3; ++c)
                        px(i, j, c) = c0[c] * (1 - t) + c1[c] * t;
                }
        }
    }
    return img;
}

// Gamma(alpha, 1) via Marsaglia-Tsang; the alpha < 1 boost uses
// Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha).
inline double gamma_draw(double alpha, RngStream& rng) {
    if (alpha < 1.0)
        return gamma_draw(alpha + 1.0, rng) * std::pow(rng.uniform(), 1.0 / alpha);
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = rng.gaussian();
        double v = 1.0 + c * x;
        if (v <= 0) continue;
        v = v * v * v;
        double u = rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

inline std::vector<double> dirichlet(double alpha, std::size_t k, RngStream& rng) {
    std::vector<double> p(k);
    double s = 0;
    for (auto& v : p) s += (v = gamma_draw(alpha, rng));
    for (auto& v : p) v /= s;
    return p;
}

}  // namespace detail

// `count` synthetic images spread over `classes` pattern families, split
// into `n_clients` equal-size shards whose class mix follows Dirichlet(alpha)
// preferences per client (small alpha -> heterogeneous shards).
inline std::vector<DatasetShard> synthesize_shards(std::size_t count, std::size_t h,
                                                   std::size_t w, int classes,
                                                   std::size_t n_clients, double alpha,
                                                   RngStream& rng) {
    if (count == 0 || n_clients == 0 || classes < 1)
        throw DatasetError("synthesize: empty dataset request");
    if (count % n_clients != 0)
        throw DatasetError("synthesize: count must divide evenly across clients");

    // per-class pools of images
    std::vector<std::vector<Tensor>> pool(classes);
    for (std::size_t i = 0; i < count; ++i) {
        int cls = (int)(i % classes);
        pool[cls].push_back(detail::synth_image(h, w, cls, rng));
    }

    std::size_t quota = count / n_clients;
    std::vector<DatasetShard> shards(n_clients);
    for (std::size_t n = 0; n < n_clients; ++n) {
        std::vector<double> pref = detail::dirichlet(alpha, (std::size_t)classes, rng);
        for (std::size_t q = 0; q < quota; ++q) {
            // draw a class by preference, fall back to whatever remains
            double u = rng.uniform();
            int cls = 0;
            double acc = 0;
            for (int c = 0; c < classes; ++c) {
                acc += pref[c];
                if (u <= acc) {
                    cls = c;
                    break;
                }
            }
            if (pool[cls].empty()) {
                cls = -1;
                for (int c = 0; c < classes; ++c)
                    if (!pool[c].empty()) {
                        cls = c;
                        break;
                    }
                if (cls < 0) throw DatasetError("synthesize: pool exhausted");
            }
            shards[n].images.push_back(std::move(pool[cls].back()));
            pool[cls].pop_back();
            shards[n].labels.push_back(cls);
        }
    }
    return shards;
}

// Reads one 8-bit PNG as an HWC float image in [0,1]; gray and RGBA inputs
// are expanded/flattened to 3 channels.
inline Tensor load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DatasetError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                             nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw DatasetError("not a readable png: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    std::size_t h = png_get_image_height(png, info);
    std::size_t w = png_get_image_width(png, info);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    Tensor img({h, w, 3});
    for (std::size_t i = 0; i < h; ++i) {
        png_read_row(png, row.data(), nullptr);
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t c = 0; c < 3; ++c)
                img.data[(i * w + j) * 3 + c] = row[j * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// Writes an HWC [0,1] image as an 8-bit RGB PNG.
inline void save_png(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.shape[2] != 3)
        throw DatasetError("save_png: expected HWC rgb image");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw DatasetError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw DatasetError("png write failure: " + path);
    }
    png_init_io(png, fp);
    std::size_t h = img.shape[0], w = img.shape[1];
    png_set_IHDR(png, info, (png_uint_32)w, (png_uint_32)h, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(w * 3);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w * 3; ++j) {
            double v = img.data[i * w * 3 + j];
            v = std::min(std::max(v, 0.0), 1.0);
            row[j] = (png_byte)std::lround(v * 255.0);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Tensor random_crop(const Tensor& img, std::size_t ph, std::size_t pw,
                          RngStream& rng) {
    std::size_t h = img.shape[0], w = img.shape[1];
    if (h < ph || w < pw) throw DatasetError("image smaller than the crop patch");
    std::size_t oi = h == ph ? 0 : rng.index(h - ph + 1);
    std::size_t oj = w == pw ? 0 : rng.index(w - pw + 1);
    Tensor out({ph, pw, 3});
    for (std::size_t i = 0; i < ph; ++i)
        for (std::size_t j = 0; j < pw; ++j)
            for (std::size_t c = 0; c < 3; ++c)
                out.data[(i * pw + j) * 3 + c] =
                    img.data[((i + oi) * w + (j + oj)) * 3 + c];
    return out;
}

// Folder mode: every .png under `path`, cropped to patch size, dealt
// round-robin across clients. Unreadable files are skipped with a warning.
inline std::vector<DatasetShard> load_folder_shards(const std::string& path,
                                                    std::size_t ph, std::size_t pw,
                                                    std::size_t n_clients,
                                                    RngStream& rng) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) throw DatasetError("not a directory: " + path);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && e.path().extension() == ".png")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());

    std::vector<DatasetShard> shards(n_clients);
    std::size_t n = 0;
    for (const auto& f : files) {
        try {
            Tensor img = load_png(f);
            shards[n % n_clients].images.push_back(random_crop(img, ph, pw, rng));
            shards[n % n_clients].labels.push_back(0);
            ++n;
        } catch (const DatasetError& e) {
            std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
        }
    }
    if (n == 0) throw DatasetError("no readable png images in " + path);
    return shards;
}

}  // namespace fedjscc
