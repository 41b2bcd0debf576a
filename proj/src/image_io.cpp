#include "misf/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace misf {

namespace {

RawImage load_ppm(std::ifstream& f, const std::string& path) {
    auto next_token = [&]() -> std::string {
        std::string tok;
        int ch;
        while ((ch = f.get()) != EOF) {
            if (ch == '#') {  // comment to end of line
                while ((ch = f.get()) != EOF && ch != '\n') {}
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        if (tok.empty()) throw IoError("ppm: truncated header in " + path);
        return tok;
    };

    std::string magic = next_token();
    if (magic != "P6") throw IoError("ppm: unsupported magic '" + magic + "' in " + path);
    RawImage img;
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (img.width <= 0 || img.height <= 0 || maxval != 255)
        throw IoError("ppm: unsupported header in " + path);
    // single whitespace already consumed by tokenizer
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (static_cast<size_t>(f.gcount()) != img.rgb.size())
        throw IoError("ppm: truncated pixel data in " + path);
    return img;
}

RawImage load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png: init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png: decode failed for " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    RawImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void save_png(const std::string& path, const RawImage& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("png: cannot open for writing " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png: init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png: encode failed for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.rgb.data() +
                                                 static_cast<size_t>(y) * img.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void save_ppm(const std::string& path, const RawImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("ppm: cannot open for writing " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (!f) throw IoError("ppm: write failed " + path);
}

bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

RawImage load_image_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("image: cannot open " + path);
    unsigned char sig[8] = {};
    f.read(reinterpret_cast<char*>(sig), 8);
    if (static_cast<size_t>(f.gcount()) >= 8 && !png_sig_cmp(sig, 0, 8)) {
        f.close();
        return load_png(path);
    }
    if (f.gcount() >= 2 && sig[0] == 'P' && sig[1] == '6') {
        f.clear();
        f.seekg(0);
        return load_ppm(f, path);
    }
    throw IoError("image: unsupported format (want PNG or binary PPM): " + path);
}

void save_image_bytes(const std::string& path, const RawImage& img) {
    check(img.width > 0 && img.height > 0 &&
              img.rgb.size() == static_cast<size_t>(img.width) * img.height * 3,
          "save_image: inconsistent raw image");
    if (ends_with(path, ".png")) return save_png(path, img);
    if (ends_with(path, ".ppm")) return save_ppm(path, img);
    throw IoError("image: unsupported output extension (want .png or .ppm): " + path);
}

}  // namespace misf
