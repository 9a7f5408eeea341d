use super::schema::{FieldSpec, SemanticType, TypeKind, ValueKind};

/// Types available at startup, in registration order.
pub const BUILTIN_TYPE_IDS: [&str; 9] =
    ["testimonial", "billboard", "qa", "news", "client_info", "text", "video", "link", "image_gallery"];

pub fn builtin_types() -> Vec<SemanticType> {
    use ValueKind::*;

    let ty = |type_id: &str, kind, label: &str, fields| SemanticType {
        type_id: type_id.to_owned(),
        kind,
        label: label.to_owned(),
        fields,
    };

    vec![
        ty(
            "testimonial",
            TypeKind::Builtin,
            "Client testimonial",
            vec![
                FieldSpec::required("author_name", ShortText),
                FieldSpec::required("body", LongText),
                FieldSpec::optional("rating", IntegerRating),
            ],
        ),
        ty(
            "billboard",
            TypeKind::Builtin,
            "Billboard announcement",
            vec![
                FieldSpec::required("title", ShortText),
                FieldSpec::required("body", LongText),
                FieldSpec::optional("contact", ShortText),
                FieldSpec::optional("expires_at", Date),
            ],
        ),
        // Visitors ask; the owner fills in `answer` after acceptance.
        ty(
            "qa",
            TypeKind::Builtin,
            "Question and answer",
            vec![FieldSpec::required("question", LongText), FieldSpec::optional("answer", LongText)],
        ),
        ty(
            "news",
            TypeKind::Builtin,
            "News or event",
            vec![
                FieldSpec::required("title", ShortText),
                FieldSpec::required("body", LongText),
                FieldSpec::optional("published_at", Date),
            ],
        ),
        ty(
            "client_info",
            TypeKind::Builtin,
            "Firm client information",
            vec![
                FieldSpec::required("firm_name", ShortText),
                FieldSpec::optional("description", LongText),
                FieldSpec::optional("url", Url),
            ],
        ),
        ty(
            "text",
            TypeKind::Custom,
            "Text",
            vec![FieldSpec::required("title", ShortText), FieldSpec::required("body", LongText)],
        ),
        ty(
            "video",
            TypeKind::Custom,
            "Video",
            vec![FieldSpec::required("title", ShortText), FieldSpec::required("url", Url)],
        ),
        ty(
            "link",
            TypeKind::Custom,
            "Link",
            vec![
                FieldSpec::required("title", ShortText),
                FieldSpec::required("url", Url),
                FieldSpec::optional("description", LongText),
            ],
        ),
        ty(
            "image_gallery",
            TypeKind::Custom,
            "Image gallery",
            vec![FieldSpec::required("title", ShortText), FieldSpec::required("images", ImageList)],
        ),
    ]
}
