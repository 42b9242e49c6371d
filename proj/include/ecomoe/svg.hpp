#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace ecomoe {

/// Bare-bones SVG line/band/bar plotting, enough for the run reports.
class SvgPlot {
public:
    SvgPlot(int width, int height, std::string title)
        : width_(width), height_(height), title_(std::move(title)) {}

    void set_range(double xmin, double xmax, double ymin, double ymax) {
        if (xmax <= xmin) xmax = xmin + 1.0;
        if (ymax <= ymin) {
            ymax = ymin + 1.0;
            ymin -= 1.0;
        }
        const double ypad = 0.05 * (ymax - ymin);
        xmin_ = xmin;
        xmax_ = xmax;
        ymin_ = ymin - ypad;
        ymax_ = ymax + ypad;
    }

    double px(double x) const {
        return margin_l_ + (x - xmin_) / (xmax_ - xmin_) * (width_ - margin_l_ - margin_r_);
    }
    double py(double y) const {
        return height_ - margin_b_ -
               (y - ymin_) / (ymax_ - ymin_) * (height_ - margin_t_ - margin_b_);
    }

    void line_series(const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& color, double width = 1.5) {
        body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
              << "\" points=\"";
        for (size_t i = 0; i < xs.size(); ++i) body_ << px(xs[i]) << ',' << py(ys[i]) << ' ';
        body_ << "\"/>\n";
    }

    void band(const std::vector<double>& xs, const std::vector<double>& lo,
              const std::vector<double>& hi, const std::string& color, double opacity = 0.2) {
        body_ << "<polygon fill=\"" << color << "\" fill-opacity=\"" << opacity
              << "\" stroke=\"none\" points=\"";
        for (size_t i = 0; i < xs.size(); ++i) body_ << px(xs[i]) << ',' << py(hi[i]) << ' ';
        for (size_t i = xs.size(); i-- > 0;) body_ << px(xs[i]) << ',' << py(lo[i]) << ' ';
        body_ << "\"/>\n";
    }

    void bar(double x, double w, double y, const std::string& color) {
        const double x0 = px(x - w / 2), x1 = px(x + w / 2);
        const double y0 = py(0.0), y1 = py(y);
        body_ << "<rect x=\"" << x0 << "\" y=\"" << std::min(y0, y1) << "\" width=\"" << (x1 - x0)
              << "\" height=\"" << std::abs(y0 - y1) << "\" fill=\"" << color << "\"/>\n";
    }

    void ellipse(double cx, double cy, double rx, double ry, double angle_deg,
                 const std::string& color, double opacity = 0.15) {
        const double sx = (width_ - margin_l_ - margin_r_) / (xmax_ - xmin_);
        const double sy = (height_ - margin_t_ - margin_b_) / (ymax_ - ymin_);
        body_ << "<ellipse cx=\"" << px(cx) << "\" cy=\"" << py(cy) << "\" rx=\"" << rx * sx
              << "\" ry=\"" << ry * sy << "\" fill=\"" << color << "\" fill-opacity=\"" << opacity
              << "\" transform=\"rotate(" << -angle_deg << ' ' << px(cx) << ' ' << py(cy)
              << ")\"/>\n";
    }

    void marker(double x, double y, const std::string& color, double r = 3.0) {
        body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r << "\" fill=\""
              << color << "\"/>\n";
    }

    void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
        double y = margin_t_ + 12;
        for (const auto& [label, color] : entries) {
            body_ << "<rect x=\"" << (width_ - margin_r_ - 110) << "\" y=\"" << y - 9
                  << "\" width=\"12\" height=\"9\" fill=\"" << color << "\"/>\n";
            body_ << "<text x=\"" << (width_ - margin_r_ - 94) << "\" y=\"" << y
                  << "\" font-size=\"11\">" << label << "</text>\n";
            y += 16;
        }
    }

    std::string render(const std::string& xlabel, const std::string& ylabel) const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
            << height_ << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << width_ / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">"
            << title_ << "</text>\n";
        // axes
        out << "<line x1=\"" << margin_l_ << "\" y1=\"" << (height_ - margin_b_) << "\" x2=\""
            << (width_ - margin_r_) << "\" y2=\"" << (height_ - margin_b_)
            << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << margin_l_ << "\" y1=\"" << margin_t_ << "\" x2=\"" << margin_l_
            << "\" y2=\"" << (height_ - margin_b_) << "\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double xv = xmin_ + (xmax_ - xmin_) * i / 4.0;
            const double yv = ymin_ + (ymax_ - ymin_) * i / 4.0;
            out << "<text x=\"" << px(xv) << "\" y=\"" << (height_ - margin_b_ + 14)
                << "\" text-anchor=\"middle\" font-size=\"10\">" << trim_num(xv) << "</text>\n";
            out << "<text x=\"" << (margin_l_ - 4) << "\" y=\"" << (py(yv) + 3)
                << "\" text-anchor=\"end\" font-size=\"10\">" << trim_num(yv) << "</text>\n";
        }
        out << "<text x=\"" << (margin_l_ + (width_ - margin_l_ - margin_r_) / 2) << "\" y=\""
            << (height_ - 6) << "\" text-anchor=\"middle\" font-size=\"11\">" << xlabel
            << "</text>\n";
        out << "<text x=\"12\" y=\"" << (margin_t_ + (height_ - margin_t_ - margin_b_) / 2)
            << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 12 "
            << (margin_t_ + (height_ - margin_t_ - margin_b_) / 2) << ")\">" << ylabel
            << "</text>\n";
        out << body_.str();
        out << "</svg>\n";
        return out.str();
    }

private:
    static std::string trim_num(double v) {
        std::ostringstream s;
        s.precision(3);
        s << v;
        return s.str();
    }

    int width_, height_;
    std::string title_;
    double xmin_ = 0, xmax_ = 1, ymin_ = 0, ymax_ = 1;
    double margin_l_ = 48, margin_r_ = 16, margin_t_ = 26, margin_b_ = 36;
    std::ostringstream body_;
};

}  // namespace ecomoe
