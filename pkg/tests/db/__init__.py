# Database tests 